#include <cstdio>

#include "svasp/gradcheck.hpp"

// placeholder entry point; subcommands land with the training pipeline
int main() {
  auto report = svasp::run_gradcheck(1);
  for (const auto& c : report.cases)
    std::printf("%-28s max rel err %.3e %s\n", c.name.c_str(), c.max_rel_err,
                c.pass ? "ok" : "FAIL");
  return report.failure_count();
}

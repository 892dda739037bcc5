// popd: run, compare and self-test the predictive online primal-dual method.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "popd/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Predictive online primal-dual proximal splitting: experiments and self-tests"};
  app.require_subcommand(1);

  std::string run_config;
  auto* run = app.add_subcommand("run", "Run one predictor on the configured scenario");
  run->add_option("config", run_config, "Config file (section.key = value)")->required();

  std::string compare_config;
  std::vector<std::string> predictors;
  auto* compare = app.add_subcommand("compare", "Run several predictors on one shared frame sequence");
  compare->add_option("config", compare_config, "Config file (section.key = value)")->required();
  compare->add_option("--predictors", predictors, "Comma-separated predictor names")->delimiter(',');

  popd::SelftestOptions st;
  std::string fault;
  auto* selftest = app.add_subcommand("selftest", "Adjoint, prox, preservation and gradient property checks");
  selftest->add_option("--seed", st.seed, "Seed of the random instances");
  selftest->add_option("--inject-fault", fault, "Deliberate fault for testing the harness")
      ->check(CLI::IsMember({"broken-adjoint"}))
      ->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return popd::kExitUsage;
  }

  if (*run) return popd::cmd_run(run_config);
  if (*compare) return popd::cmd_compare(compare_config, predictors);
  st.broken_adjoint = fault == "broken-adjoint";
  return popd::cmd_selftest(st);
}

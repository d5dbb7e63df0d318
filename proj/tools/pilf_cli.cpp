// pilf: staged command-line driver for the forecasting pipeline.

#include <cstdlib>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "pilf/pipeline.hpp"

namespace {

struct Overrides {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> lambda1;
  std::optional<double> lambda2;
  std::optional<std::string> out;
  pilf::StageOptions options;
};

pilf::RunConfig resolve(const Overrides& o) {
  pilf::RunConfig c = o.config_path.empty() ? pilf::RunConfig{} : pilf::load_run_config(o.config_path);
  if (o.seed) c.seed = *o.seed;
  if (o.lambda1) c.physics.lambda1 = *o.lambda1;
  if (o.lambda2) c.physics.lambda2 = *o.lambda2;
  if (o.out) c.out_dir = *o.out;
  pilf::validate(c);
  return c;
}

void print_error(const std::string& stage, const std::string& message, const std::string& context) {
  std::cerr << nlohmann::json{{"stage", stage}, {"message", message}, {"context", context}}.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Physics-informed load forecasting pipeline"};
  app.require_subcommand(1);
  Overrides o;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", o.config_path, "JSON run config (defaults when omitted)");
    sub->add_option("--seed", o.seed, "Base seed");
    sub->add_option("--lambda1", o.lambda1, "Parabolic penalty weight");
    sub->add_option("--lambda2", o.lambda2, "Ramp penalty weight");
    sub->add_option("--out", o.out, "Output directory");
    sub->add_flag("--force", o.options.force, "Accept upstream artifacts from a different config");
    sub->add_flag("-v,--verbose", o.options.verbose, "Progress on stderr");
  };

  struct Sub {
    const char* name;
    const char* help;
  };
  const Sub subs[] = {
      {"synth", "Generate a synthetic load/weather dataset"},
      {"ingest", "Parse, align, impute and encode the input files"},
      {"calibrate", "Fit envelope, tolerance band and ramp limit on the training range"},
      {"train", "Train one or both branches"},
      {"fuse", "Fit ensemble weights on validation predictions"},
      {"evaluate", "Metrics by regime on the test range"},
      {"explain", "Shapley attributions, regime comparison and rank stability"},
      {"ablate", "Physics-constraint ablation grid"},
      {"print-config", "Print the resolved config and its digest"},
  };
  for (const auto& s : subs) {
    CLI::App* sub = app.add_subcommand(s.name, s.help);
    add_common(sub);
    if (std::string(s.name) == "train")
      sub->add_option("--branch", o.options.branches, "cnn, transformer or both")->check(CLI::IsMember({"cnn", "transformer", "both"}));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }
  const std::string cmd = app.get_subcommands().front()->get_name();

  try {
    const pilf::RunConfig c = resolve(o);
    if (cmd == "synth") pilf::stage_synth(c, o.options);
    else if (cmd == "ingest") pilf::stage_ingest(c, o.options);
    else if (cmd == "calibrate") pilf::stage_calibrate(c, o.options);
    else if (cmd == "train") pilf::stage_train(c, o.options);
    else if (cmd == "fuse") pilf::stage_fuse(c, o.options);
    else if (cmd == "evaluate") pilf::stage_evaluate(c, o.options);
    else if (cmd == "explain") pilf::stage_explain(c, o.options);
    else if (cmd == "ablate") pilf::stage_ablate(c, o.options);
    else if (cmd == "print-config") {
      nlohmann::json j = pilf::to_json(c);
      j["config_digest"] = pilf::config_digest(c);
      std::cout << j.dump(2) << std::endl;
    }
  } catch (const pilf::Error& e) {
    print_error(e.stage(), e.what(), e.context());
    return 1;
  } catch (const std::exception& e) {
    print_error(cmd, e.what(), "");
    return 1;
  }
  return 0;
}

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "cbe/error.hpp"
#include "cbe/pipeline.hpp"
#include "cbe/synthetic.hpp"

namespace {

void fail(std::string_view code, const std::string& message) {
  std::string flat = message;
  for (char& c : flat) {
    if (c == '\n' || c == '\t') c = ' ';
  }
  std::cerr << "error\t" << code << '\t' << flat << '\n';
}

struct StageArgs {
  std::string config;
  std::vector<std::string> sets;
  bool deterministic = false;
  bool remote = false;
  bool quiet = false;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Concept-based embedding pipeline"};
  app.require_subcommand(1);

  StageArgs args;
  for (const auto& name : cbe::pipeline::subcommands()) {
    auto* sub = app.add_subcommand(name);
    sub->add_option("-c,--config", args.config, "key = value config file");
    sub->add_option("--set", args.sets, "override, key=value (repeatable)");
    sub->add_flag("--deterministic", args.deterministic, "single-threaded everywhere");
    sub->add_flag("--remote-linker", args.remote, "allow calls to the remote entity linker");
    sub->add_flag("-q,--quiet", args.quiet, "no progress output");
  }

  cbe::synthetic::PlantedConfig planted;
  std::string synth_out;
  auto* synth = app.add_subcommand("synth", "write a planted-signal fixture");
  synth->add_option("-o,--out", synth_out, "output directory")->required();
  synth->add_option("--posts", planted.posts);
  synth->add_option("--entities", planted.entities_per_community);
  synth->add_option("--seed", planted.seed);

  auto* keys = app.add_subcommand("config-keys", "list config keys and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    fail("InvalidConfig", e.what());
    return 2;
  }

  try {
    if (synth->parsed()) {
      cbe::synthetic::write_planted(planted, synth_out);
      std::cout << synth_out << '\n';
      return 0;
    }
    if (keys->parsed()) {
      const cbe::pipeline::PipelineConfig defaults;
      for (const auto& [k, v] : defaults.to_map()) {
        std::cout << k << " = " << v << "\t(" << cbe::pipeline::env_var_for(k) << ")\n";
      }
      return 0;
    }
    std::vector<std::pair<std::string, std::string>> overrides;
    for (const auto& s : args.sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw cbe::Error(cbe::ErrorCode::InvalidConfig, "--set expects key=value, got " + s);
      }
      overrides.emplace_back(s.substr(0, eq), s.substr(eq + 1));
    }
    if (args.remote) overrides.emplace_back("linker.remote", "true");
    auto cfg = cbe::pipeline::load_config(
        args.config.empty() ? std::nullopt : std::optional<std::filesystem::path>(args.config),
        overrides);
    if (args.deterministic) cfg.make_deterministic();
    cbe::pipeline::Pipeline p(std::move(cfg), args.quiet ? nullptr : &std::cerr);
    const auto* sub = app.get_subcommands().front();
    std::cout << cbe::pipeline::run_stage(p, sub->get_name()).string() << '\n';
    return 0;
  } catch (const cbe::Error& e) {
    fail(cbe::error_code_name(e.code()), e.what());
  } catch (const std::filesystem::filesystem_error& e) {
    fail("IoError", e.what());
  } catch (const std::exception& e) {
    fail("Internal", e.what());
  }
  return 1;
}

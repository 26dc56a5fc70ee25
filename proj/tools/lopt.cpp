// lopt: meta-train, evaluate and benchmark learned optimizers.
//
//   lopt <command> [--config FILE] [--key value ...]
//
// Every config key is also a flag; flags override the file.

#include <iostream>
#include <map>

#include <CLI11.hpp>

#include "lopt/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Learned optimizer toolkit"};
  app.require_subcommand(1);

  struct Parsed {
    std::string config_path;
    std::map<std::string, std::vector<std::string>> values;
  };
  std::map<std::string, Parsed> parsed;
  for (const lopt::CommandDoc& doc : lopt::command_docs()) {
    CLI::App* sub = app.add_subcommand(doc.name, doc.help);
    Parsed& p = parsed[doc.name];
    sub->add_option("--config", p.config_path, "key = value file")->check(CLI::ExistingFile);
    for (const lopt::KeyDoc& k : doc.keys) {
      auto* opt = sub->add_option("--" + k.key, p.values[k.key], k.help);
      if (k.repeated) {
        opt->allow_extra_args()->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
      } else {
        opt->expected(1)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
      }
    }
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? lopt::kExitCompleted : lopt::kExitError;
  }

  const CLI::App* sub = app.get_subcommands().front();
  const std::string name = sub->get_name();
  const Parsed& p = parsed.at(name);
  lopt::Config config;
  try {
    const std::vector<std::string> known = lopt::known_keys(name);
    if (!p.config_path.empty()) config = lopt::Config::load(p.config_path, known);
    for (const auto& [key, values] : p.values) {
      if (!values.empty()) config.set(key, values);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return lopt::kExitError;
  }
  return lopt::run_command(name, config, std::cout, std::cerr);
}

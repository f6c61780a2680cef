#include <CLI11.hpp>

#include <cstdint>
#include <optional>
#include <string>

#include "lattice_spde/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mollified lattice scheme for elliptic SPDEs with coloured noise"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  unsigned threads = 0;
  std::string out;

  const std::pair<const char*, const char*> commands[] = {
      {"noise", "sample a noise realization and validate its covariance"},
      {"solve", "solve the lattice system for one noise realization"},
      {"converge", "coupled multi-resolution convergence experiment"},
      {"kernel", "kernel norm tables, truncation and smoothing rates"},
      {"holder", "structure functions of the Gaussian term and the solution"},
  };
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, thread_opts, out_opts, config_opts;
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    config_opts.push_back(sub->add_option("--config", config, "JSON config file")->check(CLI::ExistingFile));
    seed_opts.push_back(sub->add_option("--seed", seed, "base random seed"));
    thread_opts.push_back(sub->add_option("--threads", threads, "worker threads (0 = all cores)"));
    out_opts.push_back(sub->add_option("--out", out, "output directory"));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : lattice_spde::cli::validation;
  }

  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i]->parsed()) continue;
    lattice_spde::cli::Overrides o;
    if (seed_opts[i]->count()) o.seed = seed;
    if (thread_opts[i]->count()) o.threads = threads;
    if (out_opts[i]->count()) o.out = out;
    std::optional<std::filesystem::path> path;
    if (config_opts[i]->count()) path = config;
    return lattice_spde::cli::dispatch(subs[i]->get_name(), path, o);
  }
  return lattice_spde::cli::validation;
}

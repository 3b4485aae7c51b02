#include <iostream>

#include <CLI11.hpp>

#include "dicke/linalg.hpp"
#include "dicke/runner.hpp"

int main(int argc, char** argv) {
  try {
    dicke::linalg::ensure_reliable_blas(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "dicke: " << e.what() << '\n';
    return 3;
  }

  CLI::App app{"Dicke-model scrambling, chaos and entanglement experiments"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  int threads = 0;
  bool allow_large = false;
  for (const char* name : {"spectrum", "lyapunov-map", "fotoc", "twa", "renyi", "thermalize"}) {
    auto* sub = app.add_subcommand(name, std::string("run a ") + name + " experiment");
    sub->add_option("--config", config_path, "experiment config file")->required();
    sub->add_option("--out", out_dir, "output directory (overrides experiment.output)");
    sub->add_option("--seed", seed, "RNG seed (overrides experiment.seed)");
    sub->add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
    sub->add_flag("--allow-large", allow_large, "lift the dimension and trajectory ceilings");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const CLI::App* sub = app.get_subcommands().front();
  try {
    dicke::RunOptions opt;
    opt.expected_kind = dicke::parse_kind(sub->get_name());
    if (sub->count("--seed")) opt.seed = seed;
    if (sub->count("--threads")) opt.threads = threads;
    if (sub->count("--out")) opt.output = out_dir;
    opt.allow_large = allow_large;
    const auto result = dicke::run(dicke::load_config(config_path), opt);
    for (const auto& f : result.files) std::cout << f.path.string() << "  " << f.sha256 << '\n';
    std::cout << result.manifest.string() << '\n';
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "dicke: " << e.what() << '\n';
    return dicke::exit_code_for(e);
  }
}

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"

#include "vecchia/errors.hpp"
#include "vecchia/experiments.hpp"
#include "vecchia/io.hpp"

namespace {

vecchia::Json load_config(const std::string& path) {
  return vecchia::Json::parse(vecchia::read_text_file(path));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Vecchia-type Gaussian process approximation toolkit"};
  app.require_subcommand(1);

  std::string config_path;
  vecchia::CliOptions opts;

  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON config file")->required();
    cmd->add_option("--seed", opts.seed, "random seed");
    cmd->add_option("--out", opts.out_dir, "output directory");
    cmd->add_option("--threads", opts.threads, "worker threads");
  };

  auto* simulate = app.add_subcommand("simulate", "draw latent field + noisy observations");
  auto* loglik = app.add_subcommand("loglik", "integrated log-likelihood of a dataset");
  auto* fit = app.add_subcommand("fit", "maximum-likelihood parameter fit");
  auto* posterior = app.add_subcommand("posterior", "latent posterior mean (and variances)");
  auto* kl_grid = app.add_subcommand("kl-grid", "KL divergence over a method grid");
  auto* sparsity = app.add_subcommand("sparsity", "factor sparsity scaling over grid sizes");
  auto* estimation =
      app.add_subcommand("estimation-study", "replicated parameter-estimation comparison");
  for (auto* cmd : {simulate, loglik, fit, posterior, kl_grid, sparsity, estimation}) {
    add_common(cmd);
  }

  CLI11_PARSE(app, argc, argv);

  try {
    const vecchia::Json config = load_config(config_path);
    if (simulate->parsed()) return vecchia::run_simulate(config, opts);
    if (loglik->parsed()) return vecchia::run_loglik(config, opts);
    if (fit->parsed()) return vecchia::run_fit(config, opts);
    if (posterior->parsed()) return vecchia::run_posterior(config, opts);
    if (kl_grid->parsed()) return vecchia::run_kl_grid(config, opts);
    if (sparsity->parsed()) return vecchia::run_sparsity(config, opts);
    if (estimation->parsed()) return vecchia::run_estimation_study(config, opts);
  } catch (const vecchia::ArgumentError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}

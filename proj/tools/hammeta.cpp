// hammeta: meta-learn a graph Hamiltonian model across physical systems and
// evaluate few-step adaptation on a held-out system.
//
// Subcommands: gendata, metatrain, pretrain, adapt, cka.
// Exit codes: 0 success, 1 usage/configuration error, 2 numeric failure.
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "hammeta/commands.hpp"

namespace {

using namespace hammeta;

int dispatch(CLI::App& app, int argc, char** argv) {
  cmd::GendataOptions gen;
  CLI::App* gendata = app.add_subcommand("gendata", "generate a trajectory dataset");
  gendata->add_option("--system", gen.system, "system name")->required();
  gendata->add_option("--n", gen.n, "number of trajectories");
  gendata->add_option("--seed", gen.seed, "dataset seed");
  gendata->add_option("--out", gen.out_dir,
                      "output directory (default <data root>/<system>)");
  gendata->add_option("--rtol", gen.rtol, "integrator relative tolerance");
  gendata->add_option("--atol", gen.atol, "integrator absolute tolerance");
  gendata->add_option("--workers", gen.workers, "parallel generation workers");
  gendata->add_option("--noise-scale", gen.noise_scale,
                      "override the momentum noise constant");

  cmd::TrainOptions train_opt;
  auto add_train_flags = [&](CLI::App* c) {
    c->add_option("--scenario", train_opt.scenario, "held-out system name")
        ->required();
    c->add_option("--data", train_opt.data_dir, "data root (or HAMMETA_DATA_DIR)");
    c->add_option("--out", train_opt.out_dir, "output directory")->required();
    c->add_option("--seed", train_opt.seed, "training seed");
    c->add_option("--iters", train_opt.iterations,
                  "outer iterations (default: scenario budget / 10)");
    c->add_option("--inner-lr", train_opt.inner_lr, "inner-loop learning rate");
    c->add_option("--outer-lr", train_opt.outer_lr, "outer-loop learning rate");
    c->add_option("--inner-steps", train_opt.inner_steps, "inner gradient steps");
    c->add_option("--task-batch", train_opt.task_batch, "tasks per outer iteration");
    c->add_option("--k", train_opt.k_support, "support points per task");
    c->add_flag("--first-order", train_opt.first_order,
                "first-order meta-gradients");
    c->add_option("--loss", train_opt.loss, "logcosh or hnn_l2");
    c->add_option("--checkpoint-every", train_opt.checkpoint_every,
                  "checkpoint cadence (0: iterations/5)");
    c->add_option("--trajectories", train_opt.max_trajectories,
                  "cap trajectories loaded per dataset");
  };
  CLI::App* metatrain =
      app.add_subcommand("metatrain", "meta-train across the scenario's systems");
  add_train_flags(metatrain);
  CLI::App* pretrain =
      app.add_subcommand("pretrain", "joint-training baseline, same data budget");
  add_train_flags(pretrain);

  cmd::AdaptEvalOptions adapt_opt;
  CLI::App* adapt =
      app.add_subcommand("adapt", "adapt on the held-out system and report errors");
  adapt->add_option("--checkpoint", adapt_opt.checkpoint,
                    "checkpoint path or 'scratch'")
      ->required();
  adapt->add_option("--system", adapt_opt.system, "held-out system")->required();
  adapt->add_option("--data", adapt_opt.data_dir, "data root (or HAMMETA_DATA_DIR)");
  adapt->add_option("--out", adapt_opt.out_dir, "output directory")->required();
  adapt->add_option("--seeds", adapt_opt.seeds, "number of independent runs");
  adapt->add_option("--seed-base", adapt_opt.seed_base, "first seed value");
  adapt->add_option("--steps", adapt_opt.steps, "adaptation steps");
  adapt->add_option("--eval-every", adapt_opt.eval_every,
                    "rollout stride over adaptation steps (0: final step only)");
  adapt->add_option("--lr", adapt_opt.lr, "adaptation learning rate");
  adapt->add_option("--k", adapt_opt.k_support, "support points");
  adapt->add_flag("--analytic-field", adapt_opt.analytic_field_debug,
                  "debug: roll out the ground-truth field (harness self-test)");
  adapt->add_option("--workers", adapt_opt.workers, "per-seed parallelism");

  cmd::CkaOptions cka_opt;
  CLI::App* cka = app.add_subcommand(
      "cka", "1-CKA of the last layer between the start and adaptation steps");
  cka->add_option("--checkpoint", cka_opt.checkpoint, "checkpoint path or 'scratch'")
      ->required();
  cka->add_option("--system", cka_opt.system, "held-out system")->required();
  cka->add_option("--data", cka_opt.data_dir, "data root (or HAMMETA_DATA_DIR)");
  cka->add_option("--out", cka_opt.out_dir, "output directory")->required();
  cka->add_option("--steps", cka_opt.steps, "adaptation steps");
  cka->add_option("--seeds", cka_opt.seeds, "number of independent runs");
  cka->add_option("--seed-base", cka_opt.seed_base, "first seed value");
  cka->add_option("--lr", cka_opt.lr, "adaptation learning rate");
  cka->add_option("--probe", cka_opt.probe_size, "probe batch size");

  app.require_subcommand(1);
  app.parse(argc, argv);

  if (gendata->parsed()) cmd::cmd_gendata(gen);
  if (metatrain->parsed()) cmd::cmd_metatrain(train_opt);
  if (pretrain->parsed()) cmd::cmd_pretrain(train_opt);
  if (adapt->parsed()) cmd::cmd_adapt_eval(adapt_opt);
  if (cka->parsed()) cmd::cmd_cka(cka_opt);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"meta-learned graph Hamiltonian dynamics"};
  try {
    return dispatch(app, argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const IntegrationError& e) {
    std::cerr << "integration failure: " << e.what() << "\n";
    return 2;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

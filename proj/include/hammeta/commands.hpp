// Experiment orchestration behind the CLI subcommands: dataset generation,
// meta-training and the joint-training baseline, held-out adaptation with
// rollout reports, and the CKA adaptation curve.
#pragma once

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hammeta/checkpoint.hpp"
#include "hammeta/common.hpp"
#include "hammeta/dataset.hpp"
#include "hammeta/evaluation.hpp"
#include "hammeta/model.hpp"
#include "hammeta/training.hpp"

namespace hammeta::cmd {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Desk-scale default: a tenth of the per-scenario outer-loop budget.
constexpr long kDeskScaleDivisor = 10;

inline fs::path resolve_data_root(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("HAMMETA_DATA_DIR"); env != nullptr && *env) {
    return env;
  }
  throw IoError("no data directory: pass --data or set HAMMETA_DATA_DIR");
}

inline fs::path dataset_dir(const fs::path& root, const phys::SystemSpec& sys) {
  return root / std::string(sys.name());
}

// ---------------------------------------------------------------------------
// gendata

struct GendataOptions {
  std::string system;
  std::size_t n{1000};
  std::uint64_t seed{0};
  std::string out_dir;
  double rtol{1e-9};
  double atol{1e-12};
  int workers{1};
  std::optional<double> noise_scale;
};

inline void cmd_gendata(const GendataOptions& opt) {
  io::GenConfig cfg;
  cfg.system = phys::SystemSpec::from_name(opt.system);
  cfg.n_trajectories = opt.n;
  cfg.seed = opt.seed;
  cfg.integrator.rtol = opt.rtol;
  cfg.integrator.atol = opt.atol;
  cfg.workers = opt.workers;
  cfg.noise_scale = opt.noise_scale;

  const fs::path dir =
      opt.out_dir.empty() ? dataset_dir(resolve_data_root(""), cfg.system)
                          : fs::path(opt.out_dir);
  io::write_dataset(dir, cfg);

  std::ifstream mf(dir / "manifest.json");
  const json manifest = json::parse(mf);
  const auto failures = manifest.at("energy_check").at("failed_trajectories");
  std::cout << "wrote " << opt.n << " " << cfg.system.name() << " trajectories to "
            << dir.string() << " (manifest "
            << manifest.at("manifest_hash").get<std::string>() << ", "
            << failures.size() << " energy-check failures)\n";
}

// ---------------------------------------------------------------------------
// metatrain / pretrain

struct TrainOptions {
  std::string scenario;  // held-out system name
  std::string data_dir;
  std::string out_dir;
  std::uint64_t seed{0};
  std::optional<long> iterations;  // default: scenario budget / 10
  std::optional<double> inner_lr;
  std::optional<double> outer_lr;
  std::optional<int> inner_steps;
  std::optional<int> task_batch;
  std::optional<std::size_t> k_support;
  bool first_order{false};
  std::string loss{"logcosh"};
  long checkpoint_every{0};  // 0: iterations / 5
  std::optional<std::size_t> max_trajectories;
};

namespace detail {

struct LoadedData {
  std::vector<io::Dataset> datasets;  // aligned with scenario train systems
  json hashes;
};

inline LoadedData load_training_data(const train::ScenarioConfig& scenario,
                                     const fs::path& root,
                                     std::optional<std::size_t> max_traj) {
  LoadedData out;
  std::vector<std::string> missing;
  for (const phys::SystemSpec& sys : scenario.train_systems) {
    if (!fs::exists(dataset_dir(root, sys) / "manifest.json")) {
      missing.push_back(std::string(sys.name()));
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing datasets under " + root.string() + " for:";
    for (const auto& m : missing) msg += " " + m;
    throw IoError(msg);
  }
  out.hashes = json::object();
  for (const phys::SystemSpec& sys : scenario.train_systems) {
    io::Dataset ds = io::load_dataset(dataset_dir(root, sys));
    if (max_traj && ds.trajectories.size() > *max_traj) {
      ds.trajectories.resize(*max_traj);
    }
    if (ds.trajectories.empty()) {
      throw IoError("dataset for " + std::string(sys.name()) + " is empty");
    }
    out.hashes[std::string(sys.name())] = ds.manifest_hash;
    out.datasets.push_back(std::move(ds));
  }
  return out;
}

inline train::MetaConfig apply_overrides(const TrainOptions& opt,
                                         train::MetaConfig cfg) {
  cfg.outer_iterations = opt.iterations.value_or(
      std::max<long>(1, cfg.outer_iterations / kDeskScaleDivisor));
  if (opt.inner_lr) cfg.inner_lr = *opt.inner_lr;
  if (opt.outer_lr) cfg.outer_lr = *opt.outer_lr;
  if (opt.inner_steps) cfg.inner_steps = *opt.inner_steps;
  if (opt.task_batch) cfg.task_batch_size = *opt.task_batch;
  if (opt.k_support) cfg.k_support = *opt.k_support;
  cfg.first_order = opt.first_order;
  cfg.loss = train::loss_kind_from_name(opt.loss);
  cfg.validate();
  return cfg;
}

inline json meta_config_json(const train::MetaConfig& cfg) {
  return json{{"inner_lr", cfg.inner_lr},
              {"outer_lr", cfg.outer_lr},
              {"inner_steps", cfg.inner_steps},
              {"outer_iterations", cfg.outer_iterations},
              {"task_batch_size", cfg.task_batch_size},
              {"k_support", cfg.k_support},
              {"first_order", cfg.first_order},
              {"loss", cfg.loss == train::LossKind::kLogCosh ? "logcosh" : "hnn_l2"}};
}

inline void run_training(const TrainOptions& opt, bool meta) {
  const train::ScenarioConfig scenario =
      train::scenario_for(phys::SystemSpec::from_name(opt.scenario).kind);
  const train::MetaConfig cfg = apply_overrides(opt, scenario.meta);
  const fs::path root = resolve_data_root(opt.data_dir);
  const fs::path out = opt.out_dir;
  fs::create_directories(out);

  const LoadedData data = load_training_data(scenario, root, opt.max_trajectories);

  json experiment{{"schema_version", 1},
                  {"kind", "experiment"},
                  {"command", meta ? "metatrain" : "pretrain"},
                  {"scenario", opt.scenario},
                  {"seed", opt.seed},
                  {"meta_config", meta_config_json(cfg)},
                  {"dataset_hashes", data.hashes}};
  experiment["manifest_hash"] = io::manifest_hash(experiment);
  {
    std::ofstream mf(out / "manifest.json", std::ios::trunc);
    mf << experiment.dump(2) << "\n";
  }
  std::cout << (meta ? "metatrain" : "pretrain") << " scenario=" << opt.scenario
            << " config=" << meta_config_json(cfg).dump() << "\n";

  const long ckpt_every = opt.checkpoint_every > 0
                              ? opt.checkpoint_every
                              : std::max<long>(1, cfg.outer_iterations / 5);

  Rng rng(opt.seed);
  train::HnnProblem prob{cfg.loss};
  std::vector<ad::Tensor> params = nn::init_params(opt.seed).as_list();
  train::AdamState adam(nn::parameter_count());

  std::ofstream log(out / "training_log.csv", std::ios::trunc);
  if (!log) throw IoError("cannot write training log");
  log << "iteration,mean_inner_pre_loss,mean_outer_loss,wall_time_s\n";
  log.precision(17);

  auto save = [&](const std::string& name, long iter) {
    json prov = experiment;
    prov.erase("manifest_hash");
    prov["iteration"] = iter;
    prov["experiment_hash"] = experiment["manifest_hash"];
    io::save_checkpoint(out / name, nn::ModelParams::from_list(params), prov);
  };

  const auto t0 = std::chrono::steady_clock::now();
  for (long iter = 1; iter <= cfg.outer_iterations; ++iter) {
    std::vector<train::TaskBatch> tasks;
    tasks.reserve(static_cast<std::size_t>(cfg.task_batch_size));
    for (int b = 0; b < cfg.task_batch_size; ++b) {
      const io::Dataset& ds = data.datasets[rng.next_below(data.datasets.size())];
      const phys::Trajectory& traj =
          ds.trajectories[rng.next_below(ds.trajectories.size())];
      tasks.push_back(train::sample_task(traj, cfg.k_support, rng));
    }
    train::MetaStepInfo info;
    try {
      info = meta ? train::maml_outer_step(prob, params, tasks, cfg, adam)
                  : train::pretrain_step(prob, params, tasks, cfg, adam);
    } catch (const NumericError& e) {
      throw NumericError("iteration " + std::to_string(iter) + ": " + e.what());
    }
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log << iter << ',' << info.mean_pre_loss << ',' << info.mean_outer_loss << ','
        << wall << '\n';
    if (iter % ckpt_every == 0 && iter != cfg.outer_iterations) {
      char name[48];
      std::snprintf(name, sizeof(name), "checkpoint_%06ld.ckpt", iter);
      save(name, iter);
    }
  }
  save("checkpoint_final.ckpt", cfg.outer_iterations);
  std::cout << "finished " << cfg.outer_iterations << " iterations; checkpoints in "
            << out.string() << "\n";
}

}  // namespace detail

inline void cmd_metatrain(const TrainOptions& opt) { detail::run_training(opt, true); }
inline void cmd_pretrain(const TrainOptions& opt) { detail::run_training(opt, false); }

// ---------------------------------------------------------------------------
// adapt (held-out evaluation)

struct AdaptEvalOptions {
  std::string checkpoint;  // path or "scratch"
  std::string system;
  std::string data_dir;
  std::string out_dir;
  int seeds{10};
  std::uint64_t seed_base{0};
  int steps{50};
  int eval_every{0};  // 0: only step `steps` (plus step 0 with analytic debug)
  std::optional<double> lr;
  std::optional<std::size_t> k_support;
  bool analytic_field_debug{false};
  int workers{1};
};

namespace detail {

inline nn::ModelParams starting_params(const std::string& checkpoint,
                                       std::uint64_t seed, json* provenance) {
  if (checkpoint == "scratch") {
    if (provenance) *provenance = json{{"checkpoint", "scratch"}, {"init_seed", seed}};
    return nn::init_params(seed);
  }
  io::Checkpoint ck = io::load_checkpoint(checkpoint);
  if (provenance) {
    *provenance = json{{"checkpoint", checkpoint},
                       {"checkpoint_provenance", ck.header.value("provenance", json())}};
  }
  return ck.params;
}

}  // namespace detail

inline void cmd_adapt_eval(const AdaptEvalOptions& opt) {
  const phys::SystemSpec sys = phys::SystemSpec::from_name(opt.system);
  const train::ScenarioConfig scenario = train::scenario_for(sys.kind);
  const double lr = opt.lr.value_or(scenario.eval_lr);
  const std::size_t k_support = opt.k_support.value_or(scenario.meta.k_support);
  const fs::path root = resolve_data_root(opt.data_dir);
  const io::Dataset ds = io::load_dataset(dataset_dir(root, sys));
  if (ds.trajectories.empty()) throw IoError("held-out dataset is empty");
  fs::create_directories(opt.out_dir);

  std::vector<int> eval_steps;
  if (opt.analytic_field_debug || opt.eval_every <= 0) {
    eval_steps.push_back(opt.steps);
  } else {
    for (int s = 0; s <= opt.steps; s += opt.eval_every) eval_steps.push_back(s);
    if (eval_steps.back() != opt.steps) eval_steps.push_back(opt.steps);
  }

  std::vector<std::vector<eval::EvalRecord>> per_seed(
      static_cast<std::size_t>(opt.seeds));
  auto run_seed = [&](int s) {
    const std::uint64_t seed = opt.seed_base + static_cast<std::uint64_t>(s);
    Rng rng = Rng::split(opt.seed_base, static_cast<std::uint64_t>(s) + 1000003);
    const phys::Trajectory& truth =
        ds.trajectories[rng.next_below(ds.trajectories.size())];
    const train::TaskBatch task = train::sample_task(truth, k_support, rng);
    std::vector<double> t_eval;
    for (const auto& pt : truth.points) t_eval.push_back(pt.t);

    json prov;
    const nn::ModelParams start = detail::starting_params(opt.checkpoint, seed, &prov);

    auto record_rollout = [&](int step, const nn::ModelParams& params) {
      eval::RolloutResult r;
      if (opt.analytic_field_debug) {
        auto field = [&sys](double, std::span<const double> x, std::span<double> dx) {
          phys::analytic_field_flat(sys, x, dx);
        };
        // generation-grade tolerances: this path isolates harness error
        r = eval::rollout_field(field, truth.points.front(), t_eval,
                                ode::dataset_tolerances());
      } else {
        r = eval::rollout(params, sys, truth.points.front(), t_eval);
      }
      const std::vector<double> errs = eval::rollout_errors(r, truth);
      const std::vector<double> gma = eval::geometric_moving_average(errs);
      for (std::size_t i = 0; i < errs.size(); ++i) {
        eval::EvalRecord rec;
        rec.seed = static_cast<int>(seed);
        rec.system = std::string(sys.name());
        rec.adaptation_step = step;
        rec.rollout_time = t_eval[i];
        rec.err = errs[i];
        rec.gma = gma[i];
        per_seed[static_cast<std::size_t>(s)].push_back(rec);
      }
    };

    std::size_t next = 0;
    eval::AdaptOptions aopt;
    aopt.lr = lr;
    aopt.steps = opt.steps;
    eval::adapt_visit(start, task, aopt, [&](int step, const nn::ModelParams& p) {
      while (next < eval_steps.size() && eval_steps[next] == step) {
        record_rollout(step, p);
        ++next;
      }
    });
  };

  if (opt.workers <= 1) {
    for (int s = 0; s < opt.seeds; ++s) run_seed(s);
  } else {
    std::vector<std::future<void>> futs;
    for (int s = 0; s < opt.seeds; ++s) {
      futs.push_back(std::async(std::launch::async, run_seed, s));
      if (static_cast<int>(futs.size()) >= opt.workers) {
        for (auto& f : futs) f.get();
        futs.clear();
      }
    }
    for (auto& f : futs) f.get();
  }

  std::vector<eval::EvalRecord> records;
  for (const auto& chunk : per_seed) {
    records.insert(records.end(), chunk.begin(), chunk.end());
  }
  eval::write_eval_csv(fs::path(opt.out_dir) / "eval.csv", records);

  json summary = eval::summarize_records(records);
  summary["system"] = std::string(sys.name());
  summary["checkpoint"] = opt.checkpoint;
  summary["adaptation_lr"] = lr;
  summary["k_support"] = k_support;
  summary["seeds"] = opt.seeds;
  summary["seed_base"] = opt.seed_base;
  summary["steps"] = opt.steps;
  summary["analytic_field_debug"] = opt.analytic_field_debug;
  summary["dataset_hash"] = ds.manifest_hash;
  summary["manifest_hash"] = io::manifest_hash(summary);
  std::ofstream js(fs::path(opt.out_dir) / "summary.json", std::ios::trunc);
  js << summary.dump(2) << "\n";
  std::cout << "wrote " << records.size() << " evaluation rows to " << opt.out_dir
            << "\n";
}

// ---------------------------------------------------------------------------
// cka

struct CkaOptions {
  std::string checkpoint;  // path or "scratch"
  std::string system;
  std::string data_dir;
  std::string out_dir;
  int steps{200};
  int seeds{1};
  std::uint64_t seed_base{0};
  std::optional<double> lr;
  std::size_t probe_size{256};
};

inline void cmd_cka(const CkaOptions& opt) {
  const phys::SystemSpec sys = phys::SystemSpec::from_name(opt.system);
  const train::ScenarioConfig scenario = train::scenario_for(sys.kind);
  const double lr = opt.lr.value_or(scenario.eval_lr);
  const fs::path root = resolve_data_root(opt.data_dir);
  const io::Dataset ds = io::load_dataset(dataset_dir(root, sys));
  if (ds.trajectories.empty()) throw IoError("held-out dataset is empty");
  fs::create_directories(opt.out_dir);

  json manifest{{"schema_version", 1},
                {"kind", "cka"},
                {"checkpoint", opt.checkpoint},
                {"system", std::string(sys.name())},
                {"steps", opt.steps},
                {"seeds", opt.seeds},
                {"seed_base", opt.seed_base},
                {"adaptation_lr", lr},
                {"probe_size", opt.probe_size},
                {"dataset_hash", ds.manifest_hash}};
  manifest["manifest_hash"] = io::manifest_hash(manifest);
  {
    std::ofstream mf(fs::path(opt.out_dir) / "manifest.json", std::ios::trunc);
    mf << manifest.dump(2) << "\n";
  }

  std::ofstream csv(fs::path(opt.out_dir) / "cka.csv", std::ios::trunc);
  if (!csv) throw IoError("cannot write cka.csv");
  csv << "seed,system,adaptation_step,one_minus_cka\n";
  csv.precision(17);

  for (int s = 0; s < opt.seeds; ++s) {
    const std::uint64_t seed = opt.seed_base + static_cast<std::uint64_t>(s);
    Rng rng = Rng::split(opt.seed_base, static_cast<std::uint64_t>(s) + 2000003);
    const phys::Trajectory& traj =
        ds.trajectories[rng.next_below(ds.trajectories.size())];
    const train::TaskBatch task =
        train::sample_task(traj, scenario.meta.k_support, rng);

    // probe: states drawn uniformly from held-out trajectories, fixed per seed
    std::vector<phys::PhasePoint> probe_pts;
    probe_pts.reserve(opt.probe_size);
    for (std::size_t i = 0; i < opt.probe_size; ++i) {
      const phys::Trajectory& t = ds.trajectories[rng.next_below(ds.trajectories.size())];
      probe_pts.push_back(t.points[rng.next_below(t.points.size())]);
    }
    const nn::GraphBatch probe = nn::make_graph_batch(sys, probe_pts);

    const nn::ModelParams start = detail::starting_params(opt.checkpoint, seed, nullptr);
    eval::AdaptOptions aopt;
    aopt.lr = lr;
    aopt.steps = opt.steps;
    const std::vector<double> curve = eval::cka_adaptation_curve(start, task, probe, aopt);
    for (std::size_t i = 0; i < curve.size(); ++i) {
      csv << seed << ',' << sys.name() << ',' << i << ',' << curve[i] << '\n';
    }
  }
  std::cout << "wrote 1-CKA curves (" << opt.steps << " steps, " << opt.seeds
            << " seed(s)) to " << opt.out_dir << "\n";
}

}  // namespace hammeta::cmd

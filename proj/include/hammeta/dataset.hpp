// Trajectory generation with the close-encounter resample guard, the on-disk
// dataset layout (manifest.json + binary trajectory blocks), and loading.
//
// Block file layout, all little-endian 64-bit floats:
//   8 bytes   magic "HMDATA1\n"
//   3 x u64   trajectories in block, steps per trajectory, state dimension
//   per trajectory: times[steps], states[steps*dim], derivs[steps*dim]
#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hammeta/common.hpp"
#include "hammeta/ode.hpp"
#include "hammeta/rng.hpp"
#include "hammeta/systems.hpp"

namespace hammeta::io {

using json = nlohmann::json;

constexpr std::size_t kDefaultSteps = 200;
constexpr double kDefaultTimeSpan = 10.0;
constexpr double kEnergyDriftTolerance = 1e-4;
constexpr double kMinBodyDistance = 0.05;
constexpr std::size_t kMaxResamples = 10;
constexpr std::size_t kBlockCapacity = 256;

inline std::vector<double> uniform_times(std::size_t n_steps, double t_end) {
  std::vector<double> t(n_steps);
  for (std::size_t i = 0; i < n_steps; ++i) {
    t[i] = t_end * static_cast<double>(i) / static_cast<double>(n_steps - 1);
  }
  return t;
}

// Smallest pairwise body distance along a multi-particle trajectory.
inline double min_body_distance(const phys::Trajectory& traj) {
  const int n = traj.system.n_particles;
  if (n < 2) return std::numeric_limits<double>::infinity();
  double dmin = std::numeric_limits<double>::infinity();
  for (const auto& pt : traj.points) {
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        const double dx = pt.q[2 * i] - pt.q[2 * j];
        const double dy = pt.q[2 * i + 1] - pt.q[2 * j + 1];
        dmin = std::min(dmin, std::hypot(dx, dy));
      }
    }
  }
  return dmin;
}

// Samples an initial condition, integrates the analytic field over [0, t_end]
// and attaches the analytic derivatives. Initial conditions whose orbit fails
// to integrate or brings bodies within kMinBodyDistance are resampled.
inline phys::Trajectory generate_trajectory(
    const phys::SystemSpec& sys, Rng& rng, const ode::IntegratorConfig& cfg,
    std::size_t n_steps = kDefaultSteps, double t_end = kDefaultTimeSpan,
    std::optional<double> noise_scale = std::nullopt) {
  const std::vector<double> t_eval = uniform_times(n_steps, t_end);
  auto field = [&sys](double, std::span<const double> x, std::span<double> dx) {
    phys::analytic_field_flat(sys, x, dx);
  };
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= kMaxResamples; ++attempt) {
    const phys::PhasePoint x0 = phys::sample_initial(sys, rng, noise_scale);
    ode::IntegrationResult r;
    try {
      r = ode::try_integrate(field, x0.to_state(), t_eval, cfg);
    } catch (const DomainError& e) {
      last_error = e.what();
      continue;
    }
    if (r.failure) {
      last_error = r.failure->reason;
      continue;
    }
    phys::Trajectory traj;
    traj.system = sys;
    traj.points.reserve(n_steps);
    traj.derivs.reserve(n_steps);
    bool singular = false;
    for (std::size_t i = 0; i < n_steps; ++i) {
      traj.points.push_back(phys::PhasePoint::from_state(t_eval[i], r.states[i]));
      try {
        auto [qd, pd] = phys::analytic_field(sys, traj.points.back());
        std::vector<double> d(std::move(qd));
        d.insert(d.end(), pd.begin(), pd.end());
        traj.derivs.push_back(std::move(d));
      } catch (const DomainError& e) {
        last_error = e.what();
        singular = true;
        break;
      }
    }
    if (singular) continue;
    if (min_body_distance(traj) < kMinBodyDistance) {
      last_error = "close encounter below " + std::to_string(kMinBodyDistance);
      continue;
    }
    return traj;
  }
  throw IntegrationError("trajectory generation failed after " +
                             std::to_string(kMaxResamples) + " resamples: " +
                             last_error,
                         0.0);
}

// ---------------------------------------------------------------------------
// Little-endian f64 framing.

namespace detail {

inline void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double d) {
  std::uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(out, bits);
}
inline std::uint64_t get_u64(const char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(p[i]);
  return v;
}
inline double get_f64(const char* p) {
  const std::uint64_t bits = get_u64(p);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

constexpr char kBlockMagic[8] = {'H', 'M', 'D', 'A', 'T', 'A', '1', '\n'};

}  // namespace detail

struct GenConfig {
  phys::SystemSpec system;
  std::size_t n_trajectories{1000};
  std::uint64_t seed{0};
  ode::IntegratorConfig integrator{ode::dataset_tolerances()};
  std::size_t n_steps{kDefaultSteps};
  double t_end{kDefaultTimeSpan};
  std::optional<double> noise_scale;  // default: system convention
  int workers{1};
};

struct Dataset {
  phys::SystemSpec system;
  std::vector<phys::Trajectory> trajectories;
  json manifest;
  std::string manifest_hash;
};

inline json sampler_conventions_json() {
  return json{{"orbit_chirality", "counterclockwise"},
              {"rotation_direction", "counterclockwise"},
              {"noise", "standard normal scaled by constant, momenta only"},
              {"henon_heiles_energy_bound", 1.0 / 6.0},
              {"min_body_separation", kMinBodyDistance},
              {"max_resamples", kMaxResamples}};
}

// Canonical hash: sorted-key dump of everything except the hash field itself.
inline std::string manifest_hash(json manifest) {
  manifest.erase("manifest_hash");
  return hex64(fnv1a(manifest.dump()));
}

inline void write_dataset(const std::filesystem::path& dir, const GenConfig& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  // generate: per-trajectory derived seeds keep output independent of the
  // worker count and bit-identical across reruns
  std::vector<phys::Trajectory> trajs(cfg.n_trajectories);
  const int workers = std::max(1, cfg.workers);
  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      Rng rng = Rng::split(cfg.seed, i);
      try {
        trajs[i] = generate_trajectory(cfg.system, rng, cfg.integrator, cfg.n_steps,
                                       cfg.t_end, cfg.noise_scale);
      } catch (const IntegrationError& e) {
        throw IntegrationError(
            "trajectory " + std::to_string(i) + ": " + e.what(), e.t_fail);
      }
    }
  };
  if (workers == 1) {
    work(0, cfg.n_trajectories);
  } else {
    std::vector<std::future<void>> futs;
    const std::size_t chunk = (cfg.n_trajectories + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t b = std::min(cfg.n_trajectories, w * chunk);
      const std::size_t e = std::min(cfg.n_trajectories, b + chunk);
      if (b < e) futs.push_back(std::async(std::launch::async, work, b, e));
    }
    for (auto& f : futs) f.get();
  }

  // energy verification
  std::vector<std::size_t> failed;
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    if (phys::energy_drift(trajs[i]) >= kEnergyDriftTolerance) failed.push_back(i);
  }

  // blocks
  const std::size_t dim = cfg.system.state_dim();
  json blocks = json::array();
  for (std::size_t b0 = 0, blk = 0; b0 < trajs.size(); b0 += kBlockCapacity, ++blk) {
    const std::size_t count = std::min(kBlockCapacity, trajs.size() - b0);
    std::string bytes;
    bytes.reserve(32 + count * cfg.n_steps * (1 + 2 * dim) * 8);
    bytes.append(detail::kBlockMagic, 8);
    detail::put_u64(bytes, count);
    detail::put_u64(bytes, cfg.n_steps);
    detail::put_u64(bytes, dim);
    for (std::size_t i = b0; i < b0 + count; ++i) {
      for (const auto& pt : trajs[i].points) detail::put_f64(bytes, pt.t);
      for (const auto& pt : trajs[i].points) {
        for (double v : pt.to_state()) detail::put_f64(bytes, v);
      }
      for (const auto& d : trajs[i].derivs) {
        for (double v : d) detail::put_f64(bytes, v);
      }
    }
    char name[32];
    std::snprintf(name, sizeof(name), "block_%04zu.bin", blk);
    std::ofstream out(dir / name, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + (dir / name).string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    blocks.push_back(json{{"file", name}, {"count", count}});
  }

  json manifest{
      {"schema_version", 1},
      {"kind", "dataset"},
      {"dataset",
       {{"system", std::string(cfg.system.name())},
        {"n_trajectories", cfg.n_trajectories},
        {"n_steps", cfg.n_steps},
        {"t_span", {0.0, cfg.t_end}},
        {"seed", cfg.seed},
        {"rtol", cfg.integrator.rtol},
        {"atol", cfg.integrator.atol},
        {"noise_scale", cfg.noise_scale ? json(*cfg.noise_scale) : json(nullptr)},
        {"sampler_conventions", sampler_conventions_json()}}},
      {"blocks", blocks},
      {"energy_check",
       {{"tolerance", kEnergyDriftTolerance}, {"failed_trajectories", failed}}},
  };
  manifest["manifest_hash"] = manifest_hash(manifest);

  std::ofstream mf(dir / "manifest.json", std::ios::trunc);
  if (!mf) throw IoError("cannot write " + (dir / "manifest.json").string());
  mf << manifest.dump(2) << "\n";
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw IoError("no manifest.json in " + dir.string());
  json manifest = json::parse(mf);
  if (manifest.value("kind", "") != "dataset") {
    throw IoError("manifest in " + dir.string() + " is not a dataset manifest");
  }

  Dataset ds;
  ds.manifest = manifest;
  ds.manifest_hash = manifest.value("manifest_hash", "");
  ds.system = phys::SystemSpec::from_name(
      manifest.at("dataset").at("system").get<std::string>());
  const std::size_t dim = ds.system.state_dim();

  for (const auto& blk : manifest.at("blocks")) {
    const fs::path file = dir / blk.at("file").get<std::string>();
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IoError("missing block " + file.string());
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    if (bytes.size() < 32 || std::memcmp(bytes.data(), detail::kBlockMagic, 8) != 0) {
      throw IoError("bad block header in " + file.string());
    }
    const std::uint64_t count = detail::get_u64(bytes.data() + 8);
    const std::uint64_t steps = detail::get_u64(bytes.data() + 16);
    const std::uint64_t fdim = detail::get_u64(bytes.data() + 24);
    if (fdim != dim) throw IoError("state dimension mismatch in " + file.string());
    const std::size_t per_traj = steps * (1 + 2 * dim) * 8;
    if (bytes.size() != 32 + count * per_traj) {
      throw IoError("truncated block " + file.string());
    }
    const char* p = bytes.data() + 32;
    for (std::uint64_t k = 0; k < count; ++k) {
      phys::Trajectory traj;
      traj.system = ds.system;
      std::vector<double> times(steps);
      for (auto& t : times) { t = detail::get_f64(p); p += 8; }
      for (std::uint64_t s = 0; s < steps; ++s) {
        std::vector<double> state(dim);
        for (auto& v : state) { v = detail::get_f64(p); p += 8; }
        traj.points.push_back(phys::PhasePoint::from_state(times[s], state));
      }
      for (std::uint64_t s = 0; s < steps; ++s) {
        std::vector<double> d(dim);
        for (auto& v : d) { v = detail::get_f64(p); p += 8; }
        traj.derivs.push_back(std::move(d));
      }
      ds.trajectories.push_back(std::move(traj));
    }
  }
  return ds;
}

}  // namespace hammeta::io

#include "vecchia/experiments.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <limits>
#include <mutex>
#include <sstream>
#include <thread>

#include "vecchia/errors.hpp"
#include "vecchia/inference.hpp"

namespace vecchia {

namespace {

namespace fs = std::filesystem;

double wall_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

void write_sidecar(const std::string& out_dir, const Json& config, const CliOptions& opts,
                   const std::string& scenario) {
  Json sidecar;
  sidecar["scenario"] = scenario;
  sidecar["config"] = config;
  sidecar["seed"] = opts.seed;
  sidecar["config_digest"] = json_digest(config);
  write_text_file(out_dir + "/config.json", sidecar.dump(2) + "\n");
}

std::string ensure_out_dir(const CliOptions& opts) {
  fs::create_directories(opts.out_dir);
  return opts.out_dir;
}

}  // namespace

SimulationDraw simulate_draw(const CovarianceModel& model, const LocationSet& s,
                             std::uint64_t seed, std::uint64_t stream, int cap) {
  const int n = s.size();
  if (n > cap) {
    throw SizeError("simulate_draw: " + std::to_string(n) +
                    " locations exceed the dense simulation cap; use a smaller grid");
  }
  Eigen::MatrixXd k(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) k(a, b) = matern(model.matern, s.distance(a, b));
  }
  Eigen::LLT<Eigen::MatrixXd> llt(k);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("simulate_draw: covariance not positive definite", -1);
  }
  CounterRng rng(seed, stream);
  SimulationDraw draw;
  draw.seed = seed;
  draw.stream = stream;
  draw.y = Eigen::MatrixXd(llt.matrixL()) * rng.normals(n);
  draw.z = draw.y + std::sqrt(model.tau2) * rng.normals(n);
  return draw;
}

GeometrySpec GeometrySpec::from_json(const Json& j) {
  GeometrySpec g;
  g.kind = j.value("kind", std::string("grid"));
  g.dim = j.value("dim", 2);
  g.points_per_side = j.value("points_per_side", 20);
  g.spacing = j.value("spacing", 1.0);
  g.jitter = j.value("jitter", 0.0);
  g.csv_path = j.value("csv_path", std::string());
  return g;
}

LocationSet GeometrySpec::build(std::uint64_t seed, int jitter_index) const {
  if (kind == "csv") return read_locations_csv(csv_path);
  if (kind != "grid") throw ArgumentError("geometry: unknown kind '" + kind + "'");
  LocationSet base = grid_locations(dim, points_per_side, spacing);
  if (jitter <= 0.0) return base;
  CounterRng rng(seed, 0x9e0u + static_cast<std::uint64_t>(jitter_index));
  Eigen::MatrixXd pts = base.points();
  for (int i = 0; i < pts.rows(); ++i) {
    for (int k = 0; k < pts.cols(); ++k) {
      pts(i, k) += (rng.uniform() - 0.5) * jitter * spacing;
    }
  }
  return LocationSet(std::move(pts));
}

MethodSpec MethodSpec::from_json(const Json& j) {
  MethodSpec m;
  m.name = j.value("name", std::string());
  m.family = j.value("family", std::string("pointwise"));
  const std::string part = j.value("partition", std::string("sgv"));
  if (part == "standard") {
    m.partition = PartitionKind::standard;
  } else if (part == "latent") {
    m.partition = PartitionKind::latent;
  } else if (part == "sgv") {
    m.partition = PartitionKind::sgv;
  } else {
    throw ArgumentError("method: unknown partition '" + part + "'");
  }
  const std::string ord = j.value("ordering", std::string("maxmin"));
  if (ord == "native") {
    m.ordering = OrderingKind::native;
  } else if (ord == "coord") {
    m.ordering = OrderingKind::coord;
  } else if (ord == "maxmin") {
    m.ordering = OrderingKind::maxmin;
  } else {
    throw ArgumentError("method: unknown ordering '" + ord + "'");
  }
  const std::string cond = j.value("conditioning", std::string("nn"));
  if (cond == "nn") {
    m.conditioning = ConditioningRule::Kind::nearest;
  } else if (cond == "first_m") {
    m.conditioning = ConditioningRule::Kind::first_m;
  } else {
    throw ArgumentError("method: unknown conditioning '" + cond + "'");
  }
  m.m = j.value("m", 5);
  m.blocks_per_side = j.value("blocks_per_side", 1);
  m.knots_per_side = j.value("knots_per_side", 3);
  m.mra_j = j.value("mra_j", 2);
  m.mra_levels = j.value("mra_levels", 2);
  m.mra_r = j.value("mra_r", 1);
  if (m.name.empty()) {
    std::ostringstream name;
    name << m.family << "-" << part << "-" << ord << "-" << cond << "-m" << m.m;
    m.name = name.str();
  }
  return m;
}

namespace {

// Knot grid slightly inset from the bounding box so knots do not collide
// with data locations on exact grids.
LocationSet knot_grid(const LocationSet& data, int knots_per_side) {
  const int d = data.dim();
  Eigen::RowVectorXd lo = data.points().colwise().minCoeff();
  Eigen::RowVectorXd hi = data.points().colwise().maxCoeff();
  long long n = 1;
  for (int k = 0; k < d; ++k) n *= knots_per_side;
  Eigen::MatrixXd pts(n, d);
  std::vector<int> digit(d, 0);
  for (long long row = 0; row < n; ++row) {
    for (int k = 0; k < d; ++k) {
      const double frac = (digit[k] + 0.61803398875) / knots_per_side;
      pts(row, k) = lo[k] + frac * (hi[k] - lo[k]);
    }
    for (int k = d - 1; k >= 0; --k) {
      if (++digit[k] < knots_per_side) break;
      digit[k] = 0;
    }
  }
  return LocationSet(std::move(pts));
}

}  // namespace

VecchiaPlan build_plan(const LocationSet& s, const MethodSpec& spec) {
  if (spec.family == "pointwise") {
    ConditioningRule rule = (spec.conditioning == ConditioningRule::Kind::nearest)
                                ? ConditioningRule::nearest(spec.m)
                                : ConditioningRule::first_m(spec.m);
    return make_pointwise_plan(s, spec.ordering, rule, spec.partition);
  }
  if (spec.family == "independent_blocks") {
    return make_independent_blocks(s, spec.blocks_per_side);
  }
  if (spec.family == "mpp") {
    return make_mpp(s, knot_grid(s, spec.knots_per_side));
  }
  if (spec.family == "fsa") {
    return make_fsa(s, knot_grid(s, spec.knots_per_side), spec.blocks_per_side);
  }
  if (spec.family == "mra") {
    return make_mra(s, spec.mra_j, spec.mra_levels, spec.mra_r);
  }
  throw ArgumentError("method: unknown family '" + spec.family + "'");
}

void parallel_cells(int count, int threads, const std::function<void(int)>& cell) {
  threads = std::max(1, std::min(threads, count));
  if (threads == 1) {
    for (int i = 0; i < count; ++i) cell(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&]() {
      for (;;) {
        const int i = next.fetch_add(1);
        if (i >= count) return;
        try {
          cell(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

int run_simulate(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  const GeometrySpec geom = GeometrySpec::from_json(config.at("geometry"));
  const CovarianceModel model = model_from_json(config.at("model"));
  const int replicates = config.value("replicates", 1);
  LocationSet s = geom.build(opts.seed);
  for (int r = 0; r < replicates; ++r) {
    SimulationDraw draw = simulate_draw(model, s, opts.seed, static_cast<std::uint64_t>(r));
    const std::string path =
        replicates == 1 ? out + "/sim.csv" : out + "/sim_" + std::to_string(r) + ".csv";
    write_observations_csv(path, s, draw.y, draw.z);
  }
  write_sidecar(out, config, opts, "simulate");
  return 0;
}

int run_loglik(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  Observations obs = read_observations_csv(config.at("data").get<std::string>());
  const CovarianceModel model = model_from_json(config.at("model"));
  const MethodSpec method = MethodSpec::from_json(config.at("method"));
  VecchiaPlan plan = build_plan(obs.locations, method);

  // reorder z into the plan's observed-block order
  Eigen::VectorXd z(plan.observed_point_count());
  int w = 0;
  for (int i = 0; i < plan.block_count(); ++i) {
    if (!plan.is_observed(i)) continue;
    for (int p : plan.block_points(i)) z[w++] = obs.z[p];
  }
  Json j;
  const std::string hash = plan_hash(plan);
  if (model.tau2 < kNuggetFloorFraction * model.matern.sigma2) {
    LoglikResult r;
    r.loglik = plan_loglik(plan, model, z);
    j = loglik_to_json(r, hash);
    j["pieces"] = nullptr;  // direct product form has no factor pieces
  } else {
    FactorSet f = assemble_factors(plan, model);
    j = loglik_to_json(integrated_loglik(f, z), hash);
  }
  j["method"] = method.name;
  j["config_digest"] = json_digest(config);
  write_text_file(out + "/loglik.json", j.dump(2) + "\n");
  write_sidecar(out, config, opts, "loglik");
  return 0;
}

namespace {

std::vector<FreeParam> free_params_from_json(const Json& j) {
  std::vector<FreeParam> free;
  for (const auto& f : j) {
    FreeParam p{};
    const std::string which = f.at("param").get<std::string>();
    if (which == "sigma2") {
      p.which = FreeParam::Which::sigma2;
    } else if (which == "range") {
      p.which = FreeParam::Which::range;
    } else if (which == "tau2") {
      p.which = FreeParam::Which::tau2;
    } else {
      throw ArgumentError("fit: unknown free parameter '" + which + "'");
    }
    p.lower = f.at("lower").get<double>();
    p.upper = f.at("upper").get<double>();
    p.init = f.at("init").get<double>();
    free.push_back(p);
  }
  return free;
}

std::string fit_trace_csv(const FitResult& fit, const std::vector<FreeParam>& free,
                          const std::string& hash, const std::string& digest) {
  std::ostringstream csv;
  csv << "stage,m,eval_count";
  for (std::size_t k = 0; k < free.size(); ++k) csv << ",param" << (k + 1);
  csv << ",loglik,converged,plan_hash,config_digest\n";
  for (const auto& st : fit.trace) {
    csv << st.stage << "," << st.m << "," << st.eval_count;
    for (double v : st.params) csv << "," << format_double(v);
    csv << "," << format_double(st.loglik) << "," << (st.converged ? 1 : 0) << "," << hash << ","
        << digest << "\n";
  }
  return csv.str();
}

}  // namespace

int run_fit(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  Observations obs = read_observations_csv(config.at("data").get<std::string>());
  const CovarianceModel base = model_from_json(config.at("model"));
  const MethodSpec method = MethodSpec::from_json(config.at("method"));
  const std::vector<FreeParam> free = free_params_from_json(config.at("free"));
  std::vector<int> schedule;
  for (const auto& m : config.at("m_schedule")) schedule.push_back(m.get<int>());

  // plans share the ordering across stages; z follows the final block order
  PlanFactory plans = [&](int m) {
    MethodSpec stage = method;
    stage.m = m;
    return build_plan(obs.locations, stage);
  };
  VecchiaPlan probe = plans(schedule.front());
  Eigen::VectorXd z(probe.observed_point_count());
  int w = 0;
  for (int i = 0; i < probe.block_count(); ++i) {
    if (!probe.is_observed(i)) continue;
    for (int p : probe.block_points(i)) z[w++] = obs.z[p];
  }
  FitResult fit = mle_fit(plans, base, z, free, schedule);

  const std::string hash = plan_hash(probe);
  const std::string digest = json_digest(config);
  write_text_file(out + "/fit_trace.csv", fit_trace_csv(fit, free, hash, digest));
  Json j;
  j["fitted"] = model_to_json(fit.fitted);
  j["converged"] = fit.converged;
  j["plan_hash"] = hash;
  j["config_digest"] = digest;
  write_text_file(out + "/fit.json", j.dump(2) + "\n");
  write_sidecar(out, config, opts, "fit");
  return 0;
}

int run_posterior(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  Observations obs = read_observations_csv(config.at("data").get<std::string>());
  const CovarianceModel model = model_from_json(config.at("model"));
  const MethodSpec method = MethodSpec::from_json(config.at("method"));
  VecchiaPlan plan = build_plan(obs.locations, method);
  Eigen::VectorXd z(plan.observed_point_count());
  int w = 0;
  for (int i = 0; i < plan.block_count(); ++i) {
    if (!plan.is_observed(i)) continue;
    for (int p : plan.block_points(i)) z[w++] = obs.z[p];
  }
  FactorSet f = assemble_factors(plan, model);
  const bool with_var = config.value("marginal_var", false);
  PosteriorSummary post = posterior_summary(f, z, with_var);

  // posterior mean per latent scalar, reported with its location
  std::ostringstream csv;
  for (int k = 0; k < plan.locations.dim(); ++k) csv << (k ? "," : "") << "x" << (k + 1);
  csv << ",mean";
  if (with_var) csv << ",var";
  csv << ",plan_hash\n";
  const std::string hash = plan_hash(plan);
  int y_off = 0;
  for (int i = 0; i < plan.block_count(); ++i) {
    for (int p : plan.block_points(i)) {
      for (int k = 0; k < plan.locations.dim(); ++k) {
        csv << (k ? "," : "") << format_double(plan.locations.points()(p, k));
      }
      csv << "," << format_double(post.mean[y_off]);
      if (with_var) csv << "," << format_double((*post.marginal_var)[y_off]);
      csv << "," << hash << "\n";
      ++y_off;
    }
  }
  write_text_file(out + "/posterior.csv", csv.str());
  write_sidecar(out, config, opts, "posterior");
  return 0;
}

int run_kl_grid(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  const GeometrySpec geom = GeometrySpec::from_json(config.at("geometry"));
  const int jitters = std::max(1, config.value("jitters", 1));
  std::vector<MethodSpec> methods;
  for (const auto& m : config.at("methods")) methods.push_back(MethodSpec::from_json(m));
  std::vector<Json> models;
  for (const auto& m : config.at("models")) models.push_back(m);
  const std::string digest = json_digest(config);

  struct Cell {
    std::string row;
    bool failed = false;
  };
  const int count = static_cast<int>(models.size() * methods.size()) * jitters;
  std::vector<Cell> cells(count);
  parallel_cells(count, opts.threads, [&](int idx) {
    const int jm = static_cast<int>(methods.size()) * jitters;
    const int model_i = idx / jm;
    const int method_i = (idx % jm) / jitters;
    const int jitter_i = idx % jitters;
    const MethodSpec& method = methods[method_i];
    std::ostringstream row;
    try {
      const CovarianceModel model = model_from_json(models[model_i]);
      LocationSet s = geom.build(opts.seed, jitter_i);
      VecchiaPlan plan = build_plan(s, method);
      const bool zero_nugget = model.tau2 < kNuggetFloorFraction * model.matern.sigma2;
      double kl_x = std::numeric_limits<double>::quiet_NaN();
      if (!zero_nugget) kl_x = kl_divergence_joint(plan, model);
      const double kl_z = kl_divergence_observed(plan, model);
      const double snr = model.tau2 > 0.0 ? model.matern.sigma2 / model.tau2
                                          : std::numeric_limits<double>::infinity();
      row << method.name << ",";
      switch (method.ordering) {
        case OrderingKind::native: row << "native"; break;
        case OrderingKind::coord: row << "coord"; break;
        case OrderingKind::maxmin: row << "maxmin"; break;
      }
      row << "," << method.m << "," << format_double(model.matern.nu) << ","
          << format_double(snr) << "," << jitter_i << "," << format_double(kl_x) << ","
          << format_double(kl_z) << ",ok," << plan_hash(plan) << "," << digest;
    } catch (const std::exception& e) {
      row.str("");
      row << method.name << ",,," << "" << ",," << jitter_i << ",nan,nan,error:" << e.what()
          << ",," << digest;
      cells[idx].failed = true;
    }
    cells[idx].row = row.str();
  });

  std::ostringstream csv;
  csv << "method,ordering,m,nu,snr,jitter,kl_x,kl_z,status,plan_hash,config_digest\n";
  bool any_failed = false;
  for (const auto& c : cells) {
    csv << c.row << "\n";
    any_failed = any_failed || c.failed;
  }
  write_text_file(out + "/kl.csv", csv.str());
  write_sidecar(out, config, opts, "kl-grid");
  return any_failed ? 2 : 0;
}

int run_sparsity(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  const CovarianceModel model = model_from_json(config.at("model"));
  std::vector<int> sizes;
  for (const auto& s : config.at("sizes")) sizes.push_back(s.get<int>());
  const int dim = config.value("dim", 2);
  const double spacing = config.value("spacing", 1.0);
  std::vector<MethodSpec> methods;
  for (const auto& m : config.at("methods")) methods.push_back(MethodSpec::from_json(m));
  const std::string digest = json_digest(config);

  struct Cell {
    std::string row;
    bool failed = false;
  };
  const int count = static_cast<int>(sizes.size() * methods.size());
  std::vector<Cell> cells(count);
  parallel_cells(count, opts.threads, [&](int idx) {
    const int size_i = idx / static_cast<int>(methods.size());
    const int method_i = idx % static_cast<int>(methods.size());
    const MethodSpec& method = methods[method_i];
    std::ostringstream row;
    try {
      LocationSet s = grid_locations(dim, sizes[size_i], spacing);
      VecchiaPlan plan = build_plan(s, method);
      const auto t0 = std::chrono::steady_clock::now();
      FactorSet f = assemble_factors(plan, model);
      const double ms = wall_ms(t0);
      long long max_nnz = 0, sum_sq = 0;
      for (int c = 0; c < f.V.n; ++c) {
        const long long off = f.V.col_nnz(c) - 1;
        max_nnz = std::max(max_nnz, off);
        sum_sq += off * off;
      }
      row << s.size() << "," << method.name << "," << max_nnz << "," << sum_sq << ","
          << format_double(ms) << ",ok," << plan_hash(plan) << "," << digest;
    } catch (const std::exception& e) {
      row << sizes[size_i] << "," << method.name << ",nan,nan,nan,error:" << e.what() << ",,"
          << digest;
      cells[idx].failed = true;
    }
    cells[idx].row = row.str();
  });

  std::ostringstream csv;
  csv << "n,method,max_nnz_per_col,sum_sq_nnz,wall_ms,status,plan_hash,config_digest\n";
  bool any_failed = false;
  for (const auto& c : cells) {
    csv << c.row << "\n";
    any_failed = any_failed || c.failed;
  }
  write_text_file(out + "/sparsity.csv", csv.str());
  write_sidecar(out, config, opts, "sparsity");
  return any_failed ? 2 : 0;
}

int run_estimation_study(const Json& config, const CliOptions& opts) {
  const std::string out = ensure_out_dir(opts);
  const GeometrySpec geom = GeometrySpec::from_json(config.at("geometry"));
  const CovarianceModel true_model = model_from_json(config.at("model"));
  const std::vector<FreeParam> free = free_params_from_json(config.at("free"));
  if (free.size() != 1) {
    throw ArgumentError("estimation-study: exactly one free parameter is supported");
  }
  const int replicates = config.value("replicates", 30);
  const std::string reference = config.value("reference", std::string());
  const std::string digest = json_digest(config);

  struct StudyMethod {
    std::string name;
    std::string kind;  // plan | exact | pbl | fcl
    MethodSpec plan_spec;
    std::vector<int> m_schedule;
    int blocks_per_side = 10;
  };
  std::vector<StudyMethod> methods;
  for (const auto& mj : config.at("methods")) {
    StudyMethod sm;
    sm.kind = mj.value("kind", std::string("plan"));
    sm.name = mj.value("name", sm.kind);
    if (sm.kind == "plan") {
      sm.plan_spec = MethodSpec::from_json(mj);
      sm.name = mj.value("name", sm.plan_spec.name);
      if (mj.contains("m_schedule")) {
        for (const auto& m : mj.at("m_schedule")) sm.m_schedule.push_back(m.get<int>());
      } else {
        sm.m_schedule = {sm.plan_spec.m};
      }
    } else if (sm.kind == "pbl") {
      sm.blocks_per_side = mj.value("blocks_per_side", 10);
    } else if (sm.kind != "exact" && sm.kind != "fcl") {
      throw ArgumentError("estimation-study: unknown method kind '" + sm.kind + "'");
    }
    methods.push_back(std::move(sm));
  }

  const double truth = [&]() {
    switch (free[0].which) {
      case FreeParam::Which::sigma2: return true_model.matern.sigma2;
      case FreeParam::Which::range: return true_model.matern.scale;
      case FreeParam::Which::tau2: return true_model.tau2;
    }
    return 0.0;
  }();

  LocationSet s = geom.build(opts.seed);
  struct Cell {
    double estimate = std::numeric_limits<double>::quiet_NaN();
    double sq_error = std::numeric_limits<double>::quiet_NaN();
    bool ok = false;
    std::string status = "ok";
    std::string hash;
  };
  const int mcount = static_cast<int>(methods.size());
  std::vector<Cell> cells(replicates * mcount);
  parallel_cells(replicates * mcount, opts.threads, [&](int idx) {
    const int rep = idx / mcount;
    const int method_i = idx % mcount;
    const StudyMethod& sm = methods[method_i];
    Cell& cell = cells[idx];
    try {
      SimulationDraw draw = simulate_draw(true_model, s, opts.seed, rep);
      FitResult fit = [&]() {
        if (sm.kind == "exact") {
          return mle_fit_exact(s, true_model, draw.z, free);
        }
        if (sm.kind == "fcl") {
          auto ll = [&](const CovarianceModel& m) { return fcl_loglik(m, s, draw.z); };
          return mle_fit_custom(ll, true_model, free);
        }
        if (sm.kind == "pbl") {
          Grouping blocks = block_partition(s, Ordering::identity(s.size()), sm.blocks_per_side);
          auto pairs = rook_neighbor_pairs(s, sm.blocks_per_side);
          auto ll = [&, pairs, blocks](const CovarianceModel& m) {
            return pbl_loglik(m, s, blocks, pairs, draw.z);
          };
          return mle_fit_custom(ll, true_model, free);
        }
        PlanFactory plans = [&](int m) {
          MethodSpec stage = sm.plan_spec;
          stage.m = m;
          return build_plan(s, stage);
        };
        // singleton pointwise plans keep z in location order
        return mle_fit(plans, true_model, draw.z, free, sm.m_schedule);
      }();
      switch (free[0].which) {
        case FreeParam::Which::sigma2: cell.estimate = fit.fitted.matern.sigma2; break;
        case FreeParam::Which::range: cell.estimate = fit.fitted.matern.scale; break;
        case FreeParam::Which::tau2: cell.estimate = fit.fitted.tau2; break;
      }
      cell.sq_error = (cell.estimate - truth) * (cell.estimate - truth);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.status = std::string("error:") + e.what();
    }
  });

  std::ostringstream csv;
  csv << "replicate,method,estimate,sq_error,status,config_digest\n";
  bool any_failed = false;
  for (int rep = 0; rep < replicates; ++rep) {
    for (int mi = 0; mi < mcount; ++mi) {
      const Cell& c = cells[rep * mcount + mi];
      csv << rep << "," << methods[mi].name << "," << format_double(c.estimate) << ","
          << format_double(c.sq_error) << "," << c.status << "," << digest << "\n";
      any_failed = any_failed || !c.ok;
    }
  }
  write_text_file(out + "/estimates.csv", csv.str());

  // summary with normal-approximation CIs for MSE and for the MSE difference
  // against the reference method
  int ref_idx = -1;
  for (int mi = 0; mi < mcount; ++mi) {
    if (methods[mi].name == reference) ref_idx = mi;
  }
  std::ostringstream sum;
  sum << "method,n_ok,mse,ci_lo,ci_hi,diff_mean,diff_ci_lo,diff_ci_hi,config_digest\n";
  for (int mi = 0; mi < mcount; ++mi) {
    std::vector<double> errs, diffs;
    for (int rep = 0; rep < replicates; ++rep) {
      const Cell& c = cells[rep * mcount + mi];
      if (!c.ok) continue;
      errs.push_back(c.sq_error);
      if (ref_idx >= 0 && cells[rep * mcount + ref_idx].ok) {
        diffs.push_back(c.sq_error - cells[rep * mcount + ref_idx].sq_error);
      }
    }
    auto mean_sd = [](const std::vector<double>& v) {
      const int n = static_cast<int>(v.size());
      double mean = 0.0;
      for (double x : v) mean += x;
      mean /= std::max(1, n);
      double var = 0.0;
      for (double x : v) var += (x - mean) * (x - mean);
      var /= std::max(1, n - 1);
      return std::pair<double, double>(mean, std::sqrt(var / std::max(1, n)));
    };
    const auto [mse, se] = mean_sd(errs);
    sum << methods[mi].name << "," << errs.size() << "," << format_double(mse) << ","
        << format_double(mse - 1.96 * se) << "," << format_double(mse + 1.96 * se);
    if (!diffs.empty()) {
      const auto [dm, dse] = mean_sd(diffs);
      sum << "," << format_double(dm) << "," << format_double(dm - 1.96 * dse) << ","
          << format_double(dm + 1.96 * dse);
    } else {
      sum << ",nan,nan,nan";
    }
    sum << "," << digest << "\n";
  }
  write_text_file(out + "/summary.csv", sum.str());
  write_sidecar(out, config, opts, "estimation-study");
  return any_failed ? 2 : 0;
}

}  // namespace vecchia

#include "vecchia/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vecchia/errors.hpp"

namespace vecchia {

namespace {

CovKind kind_for(VertexKind a, VertexKind b) {
  if (a == VertexKind::observed && b == VertexKind::observed) return CovKind::zz;
  if (a == VertexKind::latent && b == VertexKind::latent) return CovKind::yy;
  return CovKind::zy;
}

void require_nugget(const VecchiaPlan& plan, const CovarianceModel& model) {
  bool needs = plan.observed_count() > 0;
  for (const auto& qz : plan.qz) needs = needs || !qz.empty();
  if (needs && model.tau2 < kNuggetFloorFraction * model.matern.sigma2) {
    throw ArgumentError(
        "assemble_factors: nugget is (numerically) zero, so observations coincide with the "
        "latent field; evaluate the observed-vector product form instead");
  }
}

}  // namespace

XStructure x_structure(const VecchiaPlan& plan) {
  const int l = plan.block_count();
  XStructure xs;
  xs.y_block_offset.resize(l);
  xs.z_block_offset.assign(l, -1);
  int y_off = 0, z_off = 0;
  for (int i = 0; i < l; ++i) {
    const int r = plan.block_size(i);
    xs.vertices.push_back({VertexKind::latent, i, xs.n_x, r});
    xs.y_block_offset[i] = y_off;
    for (int k = 0; k < r; ++k) xs.y_rows.push_back(xs.n_x + k);
    xs.n_x += r;
    y_off += r;
    if (plan.is_observed(i)) {
      xs.vertices.push_back({VertexKind::observed, i, xs.n_x, r});
      xs.z_block_offset[i] = z_off;
      for (int k = 0; k < r; ++k) xs.z_rows.push_back(xs.n_x + k);
      xs.n_x += r;
      z_off += r;
    }
  }
  xs.n_y = y_off;
  xs.n_z = z_off;
  return xs;
}

namespace {

// Per-vertex parent lists as x-vertex ids, in x order.
std::vector<std::vector<int>> vertex_parents(const VecchiaPlan& plan, const XStructure& xs) {
  const int l = plan.block_count();
  std::vector<int> y_vertex(l), z_vertex(l, -1);
  for (int v = 0; v < static_cast<int>(xs.vertices.size()); ++v) {
    if (xs.vertices[v].kind == VertexKind::latent) {
      y_vertex[xs.vertices[v].block] = v;
    } else {
      z_vertex[xs.vertices[v].block] = v;
    }
  }
  std::vector<std::vector<int>> parents(xs.vertices.size());
  for (int v = 0; v < static_cast<int>(xs.vertices.size()); ++v) {
    const auto& vx = xs.vertices[v];
    if (vx.kind == VertexKind::latent) {
      for (int j : plan.qy[vx.block]) parents[v].push_back(y_vertex[j]);
      for (int j : plan.qz[vx.block]) parents[v].push_back(z_vertex[j]);
      std::sort(parents[v].begin(), parents[v].end());
    } else {
      parents[v] = {y_vertex[vx.block]};
    }
  }
  return parents;
}

}  // namespace

FactorSet assemble_factors(const VecchiaPlan& plan, const CovarianceModel& model) {
  plan.validate();
  require_nugget(plan, model);
  FactorSet f;
  f.xs = x_structure(plan);
  const auto parents = vertex_parents(plan, f.xs);
  const int b = static_cast<int>(f.xs.vertices.size());
  const auto& loc = plan.locations;

  f.U.n = f.xs.n_x;
  f.U.col_ptr.assign(f.xs.n_x + 1, 0);
  std::vector<std::vector<int>> col_rows(f.xs.n_x);
  std::vector<std::vector<double>> col_vals(f.xs.n_x);
  f.logdet_D.resize(b);

  for (int v = 0; v < b; ++v) {
    const auto& vx = f.xs.vertices[v];
    const int r = vx.size;
    const std::vector<int>& own_pts = plan.block_points(vx.block);

    if (vx.kind == VertexKind::observed) {
      // the observation regresses exactly on its own latent block:
      // B = I and the conditional covariance is the nugget
      const double inv_sd = 1.0 / std::sqrt(model.tau2);
      const int y_off = f.xs.vertices[v - 1].offset;  // its latent block precedes it
      for (int k = 0; k < r; ++k) {
        const int col = vx.offset + k;
        col_rows[col] = {y_off + k, vx.offset + k};
        col_vals[col] = {-inv_sd, inv_sd};
      }
      f.logdet_D[v] = r * std::log(model.tau2);
      continue;
    }

    // gather parent slice: per-parent point lists and kinds
    std::vector<int> par_pts;
    std::vector<VertexKind> par_kind_by_entry;
    std::vector<int> par_offsets;  // scalar x offsets aligned with par_pts
    for (int pv : parents[v]) {
      const auto& px = f.xs.vertices[pv];
      const auto& pts = plan.block_points(px.block);
      for (int k = 0; k < static_cast<int>(pts.size()); ++k) {
        par_pts.push_back(pts[k]);
        par_kind_by_entry.push_back(px.kind);
        par_offsets.push_back(px.offset + k);
      }
    }
    const int s = static_cast<int>(par_pts.size());

    Eigen::MatrixXd d_cond;  // conditional covariance of the vertex
    Eigen::MatrixXd b_mat;   // regression coefficients onto the parent slice
    if (s == 0) {
      d_cond = cross_cov(model, loc, own_pts, own_pts, CovKind::yy);
    } else {
      // covariance blocks honoring each entry's latent/observed kind
      Eigen::MatrixXd c_gg(s, s);
      for (int a = 0; a < s; ++a) {
        for (int c = 0; c < s; ++c) {
          const double dist =
              (loc.points().row(par_pts[a]) - loc.points().row(par_pts[c])).norm();
          double val = matern(model.matern, dist);
          if (par_kind_by_entry[a] == VertexKind::observed &&
              par_kind_by_entry[c] == VertexKind::observed && par_pts[a] == par_pts[c]) {
            val += model.tau2;
          }
          c_gg(a, c) = val;
        }
      }
      Eigen::MatrixXd c_vg(r, s);
      for (int a = 0; a < r; ++a) {
        for (int c = 0; c < s; ++c) {
          const double dist = (loc.points().row(own_pts[a]) - loc.points().row(par_pts[c])).norm();
          c_vg(a, c) = matern(model.matern, dist);  // latent vertex: never a nugget
        }
      }
      Eigen::LLT<Eigen::MatrixXd> llt(c_gg);
      if (llt.info() != Eigen::Success) {
        throw NumericError("assemble_factors: singular conditioning covariance at block " +
                           std::to_string(vx.block));
      }
      b_mat = llt.solve(c_vg.transpose()).transpose();  // r x s
      d_cond = cross_cov(model, loc, own_pts, own_pts, CovKind::yy) -
               b_mat * c_vg.transpose();
      d_cond = 0.5 * (d_cond + d_cond.transpose().eval());
    }

    Eigen::LLT<Eigen::MatrixXd> llt_d(d_cond);
    if (llt_d.info() != Eigen::Success) {
      throw NumericError("assemble_factors: conditional covariance not positive definite at block " +
                         std::to_string(vx.block));
    }
    Eigen::MatrixXd l_d = llt_d.matrixL();
    // inverse square root with D^{-1} = X X', X upper triangular
    Eigen::MatrixXd x_half = l_d.transpose()
                                 .triangularView<Eigen::Upper>()
                                 .solve(Eigen::MatrixXd::Identity(r, r));
    f.logdet_D[v] = 2.0 * l_d.diagonal().array().log().sum();

    Eigen::MatrixXd scatter;  // s x r: parent rows of this column block
    if (s > 0) scatter = -b_mat.transpose() * x_half;
    for (int k = 0; k < r; ++k) {
      const int col = vx.offset + k;
      auto& rows = col_rows[col];
      auto& vals = col_vals[col];
      for (int a = 0; a < s; ++a) {
        rows.push_back(par_offsets[a]);
        vals.push_back(scatter(a, k));
      }
      for (int a = 0; a <= k; ++a) {  // upper triangle of the diagonal block
        rows.push_back(vx.offset + a);
        vals.push_back(x_half(a, k));
      }
    }
  }

  f.sum_logdet_D = std::accumulate(f.logdet_D.begin(), f.logdet_D.end(), 0.0);

  long long total = 0;
  for (int c = 0; c < f.xs.n_x; ++c) total += static_cast<long long>(col_rows[c].size());
  f.U.row_idx.reserve(total);
  f.U.values.reserve(total);
  for (int c = 0; c < f.xs.n_x; ++c) {
    f.U.col_ptr[c + 1] = f.U.col_ptr[c] + static_cast<int>(col_rows[c].size());
    f.U.row_idx.insert(f.U.row_idx.end(), col_rows[c].begin(), col_rows[c].end());
    f.U.values.insert(f.U.values.end(), col_vals[c].begin(), col_vals[c].end());
  }

  // row slices: renumber x rows into y-order / z-order
  std::vector<int> row_kind(f.xs.n_x, 0), row_newid(f.xs.n_x, -1);
  for (std::size_t k = 0; k < f.xs.y_rows.size(); ++k) {
    row_kind[f.xs.y_rows[k]] = 1;
    row_newid[f.xs.y_rows[k]] = static_cast<int>(k);
  }
  for (std::size_t k = 0; k < f.xs.z_rows.size(); ++k) {
    row_kind[f.xs.z_rows[k]] = 2;
    row_newid[f.xs.z_rows[k]] = static_cast<int>(k);
  }
  auto slice_rows = [&](int which, int out_rows) {
    SparseMatrix m;
    m.rows = out_rows;
    m.cols = f.xs.n_x;
    m.col_ptr.assign(f.xs.n_x + 1, 0);
    for (int c = 0; c < f.xs.n_x; ++c) {
      for (int p = f.U.col_ptr[c]; p < f.U.col_ptr[c + 1]; ++p) {
        if (row_kind[f.U.row_idx[p]] == which) {
          m.row_idx.push_back(row_newid[f.U.row_idx[p]]);
          m.values.push_back(f.U.values[p]);
          ++m.col_ptr[c + 1];
        }
      }
    }
    for (int c = 0; c < f.xs.n_x; ++c) m.col_ptr[c + 1] += m.col_ptr[c];
    return m;
  };
  f.U_Y = slice_rows(1, f.xs.n_y);
  f.U_Z = slice_rows(2, f.xs.n_z);

  f.W = sparse_outer(f.U_Y);
  f.V = rchol(f.W);
  return f;
}

LoglikResult integrated_loglik(const FactorSet& f, const Eigen::VectorXd& z) {
  if (z.size() != f.xs.n_z) {
    throw ArgumentError("integrated_loglik: observation vector has length " +
                        std::to_string(z.size()) + ", expected " + std::to_string(f.xs.n_z));
  }
  // z_tilde = U_Z' z
  Eigen::VectorXd z_tilde = Eigen::VectorXd::Zero(f.xs.n_x);
  for (int c = 0; c < f.U_Z.cols; ++c) {
    double acc = 0.0;
    for (int p = f.U_Z.col_ptr[c]; p < f.U_Z.col_ptr[c + 1]; ++p) {
      acc += f.U_Z.values[p] * z[f.U_Z.row_idx[p]];
    }
    z_tilde[c] = acc;
  }
  // u = U_Y z_tilde
  Eigen::VectorXd u = Eigen::VectorXd::Zero(f.xs.n_y);
  for (int c = 0; c < f.U_Y.cols; ++c) {
    for (int p = f.U_Y.col_ptr[c]; p < f.U_Y.col_ptr[c + 1]; ++p) {
      u[f.U_Y.row_idx[p]] += f.U_Y.values[p] * z_tilde[c];
    }
  }
  Eigen::VectorXd t = tri_solve(f.V, u, TriSide::upper);

  LoglikResult out;
  out.sum_logdet_D = f.sum_logdet_D;
  out.two_sum_log_V_diag = 0.0;
  for (int j = 0; j < f.V.n; ++j) out.two_sum_log_V_diag += 2.0 * std::log(f.V.diag(j));
  out.z_quad = z_tilde.squaredNorm();
  out.posterior_quad = t.squaredNorm();
  out.norm_const = f.xs.n_z * std::log(2.0 * M_PI);
  out.loglik = -0.5 * (out.sum_logdet_D + out.two_sum_log_V_diag + out.z_quad -
                       out.posterior_quad + out.norm_const);
  return out;
}

double plan_loglik(const VecchiaPlan& plan, const CovarianceModel& model,
                   const Eigen::VectorXd& z) {
  if (model.tau2 < kNuggetFloorFraction * model.matern.sigma2) {
    return observed_product_loglik(plan, model, z, /*include_nugget=*/false);
  }
  FactorSet f = assemble_factors(plan, model);
  return integrated_loglik(f, z).loglik;
}

PosteriorSummary posterior_summary(const FactorSet& f, const Eigen::VectorXd& z,
                                   bool with_marginal_var) {
  if (z.size() != f.xs.n_z) throw ArgumentError("posterior_summary: z length mismatch");
  Eigen::VectorXd z_tilde = Eigen::VectorXd::Zero(f.xs.n_x);
  for (int c = 0; c < f.U_Z.cols; ++c) {
    double acc = 0.0;
    for (int p = f.U_Z.col_ptr[c]; p < f.U_Z.col_ptr[c + 1]; ++p) {
      acc += f.U_Z.values[p] * z[f.U_Z.row_idx[p]];
    }
    z_tilde[c] = acc;
  }
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(f.xs.n_y);
  for (int c = 0; c < f.U_Y.cols; ++c) {
    for (int p = f.U_Y.col_ptr[c]; p < f.U_Y.col_ptr[c + 1]; ++p) {
      rhs[f.U_Y.row_idx[p]] -= f.U_Y.values[p] * z_tilde[c];
    }
  }
  Eigen::VectorXd w = tri_solve(f.V, rhs, TriSide::upper);
  PosteriorSummary out;
  out.mean = tri_solve(f.V, w, TriSide::transposed);
  out.precision_factor = f.V;
  if (with_marginal_var) {
    if (f.xs.n_y > kDenseOracleCap) {
      throw SizeError("posterior_summary: marginal variances need dense inversion; " +
                      std::to_string(f.xs.n_y) + " exceeds the cap");
    }
    Eigen::MatrixXd vd = f.V.dense();
    Eigen::MatrixXd w_dense = vd * vd.transpose();
    Eigen::MatrixXd cov = dense_solve(w_dense, Eigen::MatrixXd::Identity(f.xs.n_y, f.xs.n_y));
    out.marginal_var = cov.diagonal();
  }
  return out;
}

namespace detail {

Eigen::MatrixXd exact_x_covariance(const VecchiaPlan& plan, const CovarianceModel& model) {
  const XStructure xs = x_structure(plan);
  Eigen::MatrixXd c(xs.n_x, xs.n_x);
  for (const auto& va : xs.vertices) {
    for (const auto& vb : xs.vertices) {
      const auto block = cross_cov(model, plan.locations, plan.block_points(va.block),
                                   plan.block_points(vb.block), kind_for(va.kind, vb.kind));
      c.block(va.offset, vb.offset, va.size, vb.size) = block;
    }
  }
  return c;
}

Eigen::MatrixXd dense_joint_precision(const VecchiaPlan& plan, const CovarianceModel& model) {
  const XStructure xs = x_structure(plan);
  const auto parents = vertex_parents(plan, xs);
  const Eigen::MatrixXd c_full = exact_x_covariance(plan, model);
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(xs.n_x, xs.n_x);
  for (int v = 0; v < static_cast<int>(xs.vertices.size()); ++v) {
    const auto& vx = xs.vertices[v];
    std::vector<int> g_rows;
    for (int pv : parents[v]) {
      for (int k = 0; k < xs.vertices[pv].size; ++k) g_rows.push_back(xs.vertices[pv].offset + k);
    }
    const int r = vx.size;
    const int s = static_cast<int>(g_rows.size());
    Eigen::MatrixXd c_vv = c_full.block(vx.offset, vx.offset, r, r);
    Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(r, xs.n_x);
    for (int k = 0; k < r; ++k) selector(k, vx.offset + k) = 1.0;
    Eigen::MatrixXd d = c_vv;
    if (s > 0) {
      Eigen::MatrixXd c_gg(s, s), c_vg(r, s);
      for (int a = 0; a < s; ++a) {
        for (int b2 = 0; b2 < s; ++b2) c_gg(a, b2) = c_full(g_rows[a], g_rows[b2]);
        for (int k = 0; k < r; ++k) c_vg(k, a) = c_full(vx.offset + k, g_rows[a]);
      }
      Eigen::MatrixXd b_mat = dense_solve(c_gg, c_vg.transpose()).transpose();
      d -= b_mat * c_vg.transpose();
      for (int a = 0; a < s; ++a) {
        selector.col(g_rows[a]) -= b_mat.col(a);
      }
    }
    d = 0.5 * (d + d.transpose().eval());
    Eigen::MatrixXd d_inv = dense_solve(d, Eigen::MatrixXd::Identity(r, r));
    omega += selector.transpose() * d_inv * selector;
  }
  return omega;
}

double gaussian_kl(const Eigen::MatrixXd& c_true, const Eigen::MatrixXd& approx_precision,
                   double approx_precision_logdet) {
  const int n = static_cast<int>(c_true.rows());
  const double trace = approx_precision.cwiseProduct(c_true).sum();
  return 0.5 * (trace - n - approx_precision_logdet - dense_logdet(c_true));
}

}  // namespace detail

namespace {

// Dense precision of the observed vector under the plan's conditioning sets,
// conditioning each observed block on the observed blocks in q(i).
Eigen::MatrixXd observed_joint_precision(const VecchiaPlan& plan, const CovarianceModel& model,
                                         bool include_nugget) {
  const int l = plan.block_count();
  std::vector<int> z_offset(l, -1);
  int n_z = 0;
  for (int i = 0; i < l; ++i) {
    if (plan.is_observed(i)) {
      z_offset[i] = n_z;
      n_z += plan.block_size(i);
    }
  }
  auto cov_entry = [&](int pa, int pb) {
    double v = matern(model.matern, plan.locations.distance(pa, pb));
    if (include_nugget && pa == pb) v += model.tau2;
    return v;
  };
  Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n_z, n_z);
  for (int i = 0; i < l; ++i) {
    if (!plan.is_observed(i)) continue;
    std::vector<int> g_pts, g_cols;
    for (int j : plan.q[i]) {
      if (!plan.is_observed(j)) {
        throw ArgumentError(
            "observed-vector product form needs fully observed conditioning sets");
      }
      const auto& pts = plan.block_points(j);
      for (int k = 0; k < static_cast<int>(pts.size()); ++k) {
        g_pts.push_back(pts[k]);
        g_cols.push_back(z_offset[j] + k);
      }
    }
    const auto& own = plan.block_points(i);
    const int r = static_cast<int>(own.size());
    const int s = static_cast<int>(g_pts.size());
    Eigen::MatrixXd c_vv(r, r), c_vg(r, s), c_gg(s, s);
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < r; ++b) c_vv(a, b) = cov_entry(own[a], own[b]);
      for (int b = 0; b < s; ++b) c_vg(a, b) = cov_entry(own[a], g_pts[b]);
    }
    for (int a = 0; a < s; ++a) {
      for (int b = 0; b < s; ++b) c_gg(a, b) = cov_entry(g_pts[a], g_pts[b]);
    }
    Eigen::MatrixXd selector = Eigen::MatrixXd::Zero(r, n_z);
    for (int k = 0; k < r; ++k) selector(k, z_offset[i] + k) = 1.0;
    Eigen::MatrixXd d = c_vv;
    if (s > 0) {
      Eigen::MatrixXd b_mat = dense_solve(c_gg, c_vg.transpose()).transpose();
      d -= b_mat * c_vg.transpose();
      for (int a = 0; a < s; ++a) selector.col(g_cols[a]) -= b_mat.col(a);
    }
    d = 0.5 * (d + d.transpose().eval());
    Eigen::MatrixXd d_inv = dense_solve(d, Eigen::MatrixXd::Identity(r, r));
    omega += selector.transpose() * d_inv * selector;
  }
  return omega;
}

Eigen::MatrixXd observed_exact_covariance(const VecchiaPlan& plan, const CovarianceModel& model,
                                          bool include_nugget) {
  std::vector<int> pts;
  for (int i = 0; i < plan.block_count(); ++i) {
    if (plan.is_observed(i)) {
      for (int p : plan.block_points(i)) pts.push_back(p);
    }
  }
  const int n = static_cast<int>(pts.size());
  Eigen::MatrixXd c(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      double v = matern(model.matern, plan.locations.distance(pts[a], pts[b]));
      if (include_nugget && pts[a] == pts[b]) v += model.tau2;
      c(a, b) = v;
    }
  }
  return c;
}

}  // namespace

double kl_divergence_joint(const VecchiaPlan& plan, const CovarianceModel& model, int cap) {
  const XStructure xs = x_structure(plan);
  if (xs.n_x > cap) {
    throw SizeError("kl_divergence_joint: joint dimension " + std::to_string(xs.n_x) +
                    " exceeds dense cap");
  }
  FactorSet f = assemble_factors(plan, model);
  Eigen::MatrixXd ud = f.U.dense();
  Eigen::MatrixXd precision = ud * ud.transpose();
  double precision_logdet = 0.0;
  for (int j = 0; j < f.U.n; ++j) precision_logdet += 2.0 * std::log(f.U.diag(j));
  const Eigen::MatrixXd c_true = detail::exact_x_covariance(plan, model);
  return detail::gaussian_kl(c_true, precision, precision_logdet);
}

double kl_divergence_observed(const VecchiaPlan& plan, const CovarianceModel& model, int cap) {
  const bool zero_nugget = model.tau2 < kNuggetFloorFraction * model.matern.sigma2;
  const int n_z = plan.observed_point_count();
  if (n_z > cap) {
    throw SizeError("kl_divergence_observed: observed dimension exceeds dense cap");
  }
  Eigen::MatrixXd approx_precision;
  if (zero_nugget) {
    approx_precision = observed_joint_precision(plan, model, /*include_nugget=*/false);
  } else {
    FactorSet f = assemble_factors(plan, model);
    Eigen::MatrixXd ud = f.U.dense();
    Eigen::MatrixXd px = ud * ud.transpose();
    Eigen::MatrixXd c_hat = dense_solve(px, Eigen::MatrixXd::Identity(f.xs.n_x, f.xs.n_x), cap);
    Eigen::MatrixXd c_hat_z(n_z, n_z);
    for (int a = 0; a < n_z; ++a) {
      for (int b = 0; b < n_z; ++b) c_hat_z(a, b) = c_hat(f.xs.z_rows[a], f.xs.z_rows[b]);
    }
    approx_precision = dense_solve(c_hat_z, Eigen::MatrixXd::Identity(n_z, n_z));
  }
  const Eigen::MatrixXd c_true = observed_exact_covariance(plan, model, !zero_nugget);
  const double approx_logdet = -dense_logdet(
      dense_solve(approx_precision, Eigen::MatrixXd::Identity(n_z, n_z)));
  return detail::gaussian_kl(c_true, approx_precision, approx_logdet);
}

double dense_loglik(const CovarianceModel& model, const LocationSet& s, const Eigen::VectorXd& z,
                    int cap) {
  const int n = s.size();
  if (z.size() != n) throw ArgumentError("dense_loglik: z length mismatch");
  if (n > cap) throw SizeError("dense_loglik: size exceeds dense cap");
  Eigen::MatrixXd sigma(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      sigma(a, b) = matern(model.matern, s.distance(a, b)) + (a == b ? model.tau2 : 0.0);
    }
  }
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefiniteError("dense_loglik: covariance not positive definite", -1);
  }
  const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const double quad = z.dot(llt.solve(z));
  return -0.5 * (n * std::log(2.0 * M_PI) + logdet + quad);
}

double observed_product_loglik(const VecchiaPlan& plan, const CovarianceModel& model,
                               const Eigen::VectorXd& z, bool include_nugget) {
  const int l = plan.block_count();
  std::vector<int> z_offset(l, -1);
  int n_z = 0;
  for (int i = 0; i < l; ++i) {
    if (plan.is_observed(i)) {
      z_offset[i] = n_z;
      n_z += plan.block_size(i);
    }
  }
  if (z.size() != n_z) throw ArgumentError("observed_product_loglik: z length mismatch");
  auto cov_entry = [&](int pa, int pb) {
    double v = matern(model.matern, plan.locations.distance(pa, pb));
    if (include_nugget && pa == pb) v += model.tau2;
    return v;
  };
  double total = 0.0;
  for (int i = 0; i < l; ++i) {
    if (!plan.is_observed(i)) continue;
    std::vector<int> g_pts;
    std::vector<double> g_z;
    for (int j : plan.q[i]) {
      if (!plan.is_observed(j)) {
        throw ArgumentError(
            "observed_product_loglik: conditioning set references an unobserved block");
      }
      const auto& pts = plan.block_points(j);
      for (int k = 0; k < static_cast<int>(pts.size()); ++k) {
        g_pts.push_back(pts[k]);
        g_z.push_back(z[z_offset[j] + k]);
      }
    }
    const auto& own = plan.block_points(i);
    const int r = static_cast<int>(own.size());
    const int s = static_cast<int>(g_pts.size());
    Eigen::VectorXd zi(r);
    for (int k = 0; k < r; ++k) zi[k] = z[z_offset[i] + k];
    Eigen::MatrixXd c_vv(r, r);
    for (int a = 0; a < r; ++a) {
      for (int b = 0; b < r; ++b) c_vv(a, b) = cov_entry(own[a], own[b]);
    }
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(r);
    Eigen::MatrixXd d = c_vv;
    if (s > 0) {
      Eigen::MatrixXd c_gg(s, s), c_vg(r, s);
      for (int a = 0; a < s; ++a) {
        for (int b = 0; b < s; ++b) c_gg(a, b) = cov_entry(g_pts[a], g_pts[b]);
        for (int k = 0; k < r; ++k) c_vg(k, a) = cov_entry(own[k], g_pts[a]);
      }
      Eigen::Map<const Eigen::VectorXd> zg(g_z.data(), s);
      Eigen::MatrixXd b_mat = dense_solve(c_gg, c_vg.transpose()).transpose();
      mean = b_mat * zg;
      d -= b_mat * c_vg.transpose();
      d = 0.5 * (d + d.transpose().eval());
    }
    Eigen::LLT<Eigen::MatrixXd> llt(d);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefiniteError(
          "observed_product_loglik: conditional covariance not positive definite at block " +
              std::to_string(i),
          i);
    }
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    const Eigen::VectorXd resid = zi - mean;
    total += -0.5 * (r * std::log(2.0 * M_PI) + logdet + resid.dot(llt.solve(resid)));
  }
  return total;
}

double fcl_loglik(const CovarianceModel& model, const LocationSet& s, const Eigen::VectorXd& z,
                  int cap) {
  const int n = s.size();
  if (z.size() != n) throw ArgumentError("fcl_loglik: z length mismatch");
  if (n > cap) throw SizeError("fcl_loglik: size exceeds dense cap");
  Eigen::MatrixXd sigma(n, n);
  for (int a = 0; a < n; ++a) {
    for (int b = 0; b < n; ++b) {
      sigma(a, b) = matern(model.matern, s.distance(a, b)) + (a == b ? model.tau2 : 0.0);
    }
  }
  Eigen::MatrixXd q = dense_solve(sigma, Eigen::MatrixXd::Identity(n, n), cap);
  Eigen::VectorXd qz = q * z;
  double total = 0.0;
  for (int i = 0; i < n; ++i) {
    const double cond_var = 1.0 / q(i, i);
    const double resid = cond_var * qz[i];
    total += -0.5 * (std::log(2.0 * M_PI * cond_var) + resid * resid / cond_var);
  }
  return total;
}

double pbl_loglik(const CovarianceModel& model, const LocationSet& s, const Grouping& grouping,
                  const std::vector<std::pair<int, int>>& pairs, const Eigen::VectorXd& z) {
  if (z.size() != s.size()) throw ArgumentError("pbl_loglik: z length mismatch");
  double total = 0.0;
  for (const auto& [a, b] : pairs) {
    if (a < 0 || a >= grouping.block_count() || b < 0 || b >= grouping.block_count() || a == b) {
      throw ArgumentError("pbl_loglik: invalid block pair (" + std::to_string(a) + ", " +
                          std::to_string(b) + ")");
    }
    std::vector<int> pts = grouping.block(a);
    pts.insert(pts.end(), grouping.block(b).begin(), grouping.block(b).end());
    const int n = static_cast<int>(pts.size());
    Eigen::MatrixXd sigma(n, n);
    Eigen::VectorXd zz(n);
    for (int r = 0; r < n; ++r) {
      zz[r] = z[pts[r]];
      for (int c = 0; c < n; ++c) {
        sigma(r, c) = matern(model.matern, s.distance(pts[r], pts[c])) +
                      (pts[r] == pts[c] ? model.tau2 : 0.0);
      }
    }
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefiniteError("pbl_loglik: pair covariance not positive definite", -1);
    }
    const double logdet = 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
    total += -0.5 * (n * std::log(2.0 * M_PI) + logdet + zz.dot(llt.solve(zz)));
  }
  return total;
}

std::vector<std::pair<int, int>> rook_neighbor_pairs(const LocationSet& s, int blocks_per_side) {
  const auto tiles = detail::tile_coordinates(s, blocks_per_side);
  const int d = s.dim();
  // map occupied tiles (lexicographic ids) to block numbers as block_partition does
  std::vector<long long> occupied;
  for (long long t : tiles.ids) occupied.push_back(t);
  std::sort(occupied.begin(), occupied.end());
  occupied.erase(std::unique(occupied.begin(), occupied.end()), occupied.end());
  auto block_of = [&](long long tile) {
    auto it = std::lower_bound(occupied.begin(), occupied.end(), tile);
    if (it == occupied.end() || *it != tile) return -1;
    return static_cast<int>(it - occupied.begin());
  };
  std::vector<std::pair<int, int>> pairs;
  for (long long tile : occupied) {
    // decode tile coordinates
    std::vector<int> coord(d);
    long long rest = tile;
    for (int k = d - 1; k >= 0; --k) {
      coord[k] = static_cast<int>(rest % blocks_per_side);
      rest /= blocks_per_side;
    }
    for (int k = 0; k < d; ++k) {
      if (coord[k] + 1 >= blocks_per_side) continue;
      long long neighbor = 0;
      for (int j = 0; j < d; ++j) neighbor = neighbor * blocks_per_side + coord[j] + (j == k);
      const int a = block_of(tile);
      const int b = block_of(neighbor);
      if (a >= 0 && b >= 0) pairs.emplace_back(std::min(a, b), std::max(a, b));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  return pairs;
}

namespace {

struct NelderMeadResult {
  Eigen::VectorXd best;
  double best_value = 0.0;
  int eval_count = 0;
  bool converged = false;
};

NelderMeadResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& objective,
                             const Eigen::VectorXd& start, double spread, int max_evals,
                             double tol) {
  const int d = static_cast<int>(start.size());
  NelderMeadResult res;
  std::vector<Eigen::VectorXd> x(d + 1, start);
  std::vector<double> fx(d + 1);
  for (int i = 1; i <= d; ++i) x[i][i - 1] += spread;
  for (int i = 0; i <= d; ++i) {
    fx[i] = objective(x[i]);
    ++res.eval_count;
  }
  auto order = [&]() {
    std::vector<int> idx(d + 1);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return fx[a] < fx[b]; });
    std::vector<Eigen::VectorXd> x2(d + 1);
    std::vector<double> f2(d + 1);
    for (int i = 0; i <= d; ++i) {
      x2[i] = x[idx[i]];
      f2[i] = fx[idx[i]];
    }
    x = std::move(x2);
    fx = std::move(f2);
  };
  order();
  while (res.eval_count < max_evals) {
    const double scale = std::max(1.0, x[0].lpNorm<Eigen::Infinity>());
    double size = 0.0;
    for (int i = 1; i <= d; ++i) {
      size = std::max(size, (x[i] - x[0]).lpNorm<Eigen::Infinity>());
    }
    if (size / scale < tol) {
      res.converged = true;
      break;
    }
    Eigen::VectorXd cen = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < d; ++i) cen += x[i];
    cen /= d;
    Eigen::VectorXd xr = cen + (cen - x[d]);
    double fr = objective(xr);
    ++res.eval_count;
    if (fr < fx[0]) {
      Eigen::VectorXd xe = cen + 2.0 * (cen - x[d]);
      double fe = objective(xe);
      ++res.eval_count;
      if (fe < fr) {
        x[d] = xe;
        fx[d] = fe;
      } else {
        x[d] = xr;
        fx[d] = fr;
      }
    } else if (fr < fx[d - 1]) {
      x[d] = xr;
      fx[d] = fr;
    } else {
      const bool outside = fr < fx[d];
      Eigen::VectorXd xc = outside ? cen + 0.5 * (xr - cen) : cen + 0.5 * (x[d] - cen);
      double fc = objective(xc);
      ++res.eval_count;
      if (fc < std::min(fr, fx[d])) {
        x[d] = xc;
        fx[d] = fc;
      } else {  // shrink toward the best vertex
        for (int i = 1; i <= d; ++i) {
          x[i] = x[0] + 0.5 * (x[i] - x[0]);
          fx[i] = objective(x[i]);
          ++res.eval_count;
          if (res.eval_count >= max_evals) break;
        }
      }
    }
    order();
  }
  res.best = x[0];
  res.best_value = fx[0];
  return res;
}

CovarianceModel apply_free(const CovarianceModel& base, const std::vector<FreeParam>& free,
                           const Eigen::VectorXd& log_params) {
  double sigma2 = base.matern.sigma2;
  double scale = base.matern.scale;
  double tau2 = base.tau2;
  for (std::size_t k = 0; k < free.size(); ++k) {
    const double v = std::exp(log_params[static_cast<int>(k)]);
    switch (free[k].which) {
      case FreeParam::Which::sigma2: sigma2 = v; break;
      case FreeParam::Which::range: scale = v; break;
      case FreeParam::Which::tau2: tau2 = v; break;
    }
  }
  return CovarianceModel(MaternParams(sigma2, base.matern.nu, scale), tau2);
}

FitResult fit_schedule(const std::function<std::function<double(const CovarianceModel&)>(int)>&
                           loglik_for_m,
                       const CovarianceModel& base, const std::vector<FreeParam>& free,
                       const std::vector<int>& m_schedule) {
  if (free.empty() || free.size() > 3) {
    throw ArgumentError("mle_fit: between 1 and 3 free parameters");
  }
  if (m_schedule.empty()) throw ArgumentError("mle_fit: empty m schedule");
  const int d = static_cast<int>(free.size());
  Eigen::VectorXd theta(d);
  for (int k = 0; k < d; ++k) {
    if (!(free[k].lower > 0.0) || !(free[k].upper > free[k].lower) ||
        !(free[k].init >= free[k].lower) || !(free[k].init <= free[k].upper)) {
      throw ArgumentError("mle_fit: bounds must satisfy 0 < lower <= init <= upper");
    }
    theta[k] = std::log(free[k].init);
  }

  FitResult result{base, {}, false};
  for (std::size_t stage = 0; stage < m_schedule.size(); ++stage) {
    const int m = m_schedule[stage];
    auto loglik = loglik_for_m(m);
    bool any_valid = false;
    auto objective = [&](const Eigen::VectorXd& lp) {
      for (int k = 0; k < d; ++k) {
        if (lp[k] < std::log(free[k].lower) || lp[k] > std::log(free[k].upper)) return 1e100;
      }
      try {
        const double ll = loglik(apply_free(base, free, lp));
        if (!std::isfinite(ll)) return 1e100;
        any_valid = true;
        return -ll;
      } catch (const NumericError&) {
        return 1e100;
      }
    };
    NelderMeadResult nm = nelder_mead(objective, theta, 0.25, 500, 1e-6);
    if (!any_valid || nm.best_value >= 1e100) {
      throw NumericError("mle_fit: no valid likelihood evaluation in stage " +
                         std::to_string(stage));
    }
    FitStage st;
    st.stage = static_cast<int>(stage);
    st.m = m;
    st.eval_count = nm.eval_count;
    st.converged = nm.converged;
    st.start.resize(d);
    st.params.resize(d);
    for (int k = 0; k < d; ++k) {
      st.start[k] = std::exp(theta[k]);
      st.params[k] = std::exp(nm.best[k]);
    }
    st.loglik = -nm.best_value;
    result.trace.push_back(st);
    theta = nm.best;
    result.converged = nm.converged;
  }
  result.fitted = apply_free(base, free, theta);
  return result;
}

}  // namespace

FitResult mle_fit(const PlanFactory& plans, const CovarianceModel& base, const Eigen::VectorXd& z,
                  const std::vector<FreeParam>& free, const std::vector<int>& m_schedule) {
  auto loglik_for_m = [&](int m) {
    VecchiaPlan plan = plans(m);
    return std::function<double(const CovarianceModel&)>(
        [plan = std::move(plan), &z](const CovarianceModel& model) {
          return plan_loglik(plan, model, z);
        });
  };
  return fit_schedule(loglik_for_m, base, free, m_schedule);
}

FitResult mle_fit_exact(const LocationSet& s, const CovarianceModel& base,
                        const Eigen::VectorXd& z, const std::vector<FreeParam>& free) {
  auto loglik_for_m = [&](int) {
    return std::function<double(const CovarianceModel&)>(
        [&s, &z](const CovarianceModel& model) { return dense_loglik(model, s, z); });
  };
  return fit_schedule(loglik_for_m, base, free, {0});
}

FitResult mle_fit_custom(const std::function<double(const CovarianceModel&)>& loglik,
                         const CovarianceModel& base, const std::vector<FreeParam>& free) {
  auto loglik_for_m = [&](int) { return loglik; };
  return fit_schedule(loglik_for_m, base, free, {0});
}

}  // namespace vecchia

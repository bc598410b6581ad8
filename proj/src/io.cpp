#include "vecchia/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "vecchia/errors.hpp"

namespace vecchia {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open for writing: " + path);
  out << content;
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ArgumentError("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

}  // namespace

void write_locations_csv(const std::string& path, const LocationSet& s) {
  std::ostringstream out;
  for (int k = 0; k < s.dim(); ++k) out << (k ? "," : "") << "x" << (k + 1);
  out << "\n";
  for (int i = 0; i < s.size(); ++i) {
    for (int k = 0; k < s.dim(); ++k) {
      out << (k ? "," : "") << format_double(s.points()(i, k));
    }
    out << "\n";
  }
  write_text_file(path, out.str());
}

LocationSet read_locations_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("locations csv: empty file " + path);
  const auto header = split_csv_line(line);
  const int d = static_cast<int>(header.size());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != d) {
      throw ArgumentError("locations csv: ragged row in " + path);
    }
    std::vector<double> row(d);
    for (int k = 0; k < d; ++k) row[k] = std::stod(cells[k]);
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd pts(rows.size(), d);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int k = 0; k < d; ++k) pts(i, k) = rows[i][k];
  }
  return LocationSet(std::move(pts));
}

void write_observations_csv(const std::string& path, const LocationSet& s,
                            const std::optional<Eigen::VectorXd>& y, const Eigen::VectorXd& z) {
  if (z.size() != s.size() || (y && y->size() != s.size())) {
    throw ArgumentError("write_observations_csv: length mismatch");
  }
  std::ostringstream out;
  for (int k = 0; k < s.dim(); ++k) out << (k ? "," : "") << "x" << (k + 1);
  if (y) out << ",y";
  out << ",z\n";
  for (int i = 0; i < s.size(); ++i) {
    for (int k = 0; k < s.dim(); ++k) out << (k ? "," : "") << format_double(s.points()(i, k));
    if (y) out << "," << format_double((*y)[i]);
    out << "," << format_double(z[i]) << "\n";
  }
  write_text_file(path, out.str());
}

Observations read_observations_csv(const std::string& path) {
  std::istringstream in(read_text_file(path));
  std::string line;
  if (!std::getline(in, line)) throw ArgumentError("observations csv: empty file " + path);
  const auto header = split_csv_line(line);
  int z_col = -1, y_col = -1, d = 0;
  for (std::size_t k = 0; k < header.size(); ++k) {
    if (header[k] == "z") {
      z_col = static_cast<int>(k);
    } else if (header[k] == "y") {
      y_col = static_cast<int>(k);
    } else {
      ++d;
    }
  }
  if (z_col == -1) throw ArgumentError("observations csv: no z column in " + path);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw ArgumentError("observations csv: ragged row in " + path);
    }
    std::vector<double> row(cells.size());
    for (std::size_t k = 0; k < cells.size(); ++k) row[k] = std::stod(cells[k]);
    rows.push_back(std::move(row));
  }
  Eigen::MatrixXd pts(rows.size(), d);
  Eigen::VectorXd z(rows.size());
  Eigen::VectorXd y(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    int c = 0;
    for (std::size_t k = 0; k < rows[i].size(); ++k) {
      if (static_cast<int>(k) == z_col) {
        z[i] = rows[i][k];
      } else if (static_cast<int>(k) == y_col) {
        y[i] = rows[i][k];
      } else {
        pts(i, c++) = rows[i][k];
      }
    }
  }
  Observations obs{LocationSet(std::move(pts)), std::move(z), std::nullopt};
  if (y_col != -1) obs.y = std::move(y);
  return obs;
}

namespace {

Json one_based(const std::vector<int>& v) {
  Json arr = Json::array();
  for (int x : v) arr.push_back(x + 1);
  return arr;
}

std::vector<int> zero_based(const Json& arr) {
  std::vector<int> v;
  for (const auto& x : arr) v.push_back(x.get<int>() - 1);
  return v;
}

}  // namespace

Json ordering_to_json(const Ordering& o) { return one_based(o.perm()); }

Ordering ordering_from_json(const Json& j) { return Ordering(zero_based(j)); }

Json grouping_to_json(const Grouping& g) {
  Json arr = Json::array();
  for (const auto& b : g.blocks()) arr.push_back(one_based(b));
  return arr;
}

Grouping grouping_from_json(const Json& j, int n_items) {
  std::vector<std::vector<int>> blocks;
  for (const auto& b : j) blocks.push_back(zero_based(b));
  return Grouping(std::move(blocks), n_items);
}

Json plan_to_json(const VecchiaPlan& plan) {
  Json j;
  j["ordering"] = ordering_to_json(plan.block_order);
  j["blocks"] = grouping_to_json(plan.grouping);
  Json obs = Json::array();
  for (int i = 0; i < plan.block_count(); ++i) {
    if (plan.is_observed(i)) obs.push_back(i + 1);
  }
  j["observed"] = obs;
  Json q = Json::array(), qy = Json::array(), qz = Json::array();
  for (int i = 0; i < plan.block_count(); ++i) {
    q.push_back(one_based(plan.q[i]));
    qy.push_back(one_based(plan.qy[i]));
    qz.push_back(one_based(plan.qz[i]));
  }
  j["q"] = q;
  j["qy"] = qy;
  j["qz"] = qz;
  return j;
}

std::string json_digest(const Json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string plan_hash(const VecchiaPlan& plan) { return json_digest(plan_to_json(plan)); }

CovarianceModel model_from_json(const Json& j) {
  if (!j.contains("nu") || !j.contains("range")) {
    throw ArgumentError("model json: need nu and range");
  }
  const double nu = j.at("nu").get<double>();
  const auto& range = j.at("range");
  const std::string kind = range.at("kind").get<std::string>();
  const double value = range.at("value").get<double>();
  double scale;
  if (kind == "scale") {
    scale = value;
  } else if (kind == "effective") {
    scale = effective_range_to_scale(nu, value);
  } else {
    throw ArgumentError("model json: range.kind must be 'scale' or 'effective'");
  }
  if (j.contains("signal_proportion")) {
    const double total = j.value("total_variance", 1.0);
    return CovarianceModel::from_signal_proportion(j.at("signal_proportion").get<double>(), total,
                                                   nu, scale);
  }
  return CovarianceModel(MaternParams(j.at("sigma2").get<double>(), nu, scale),
                         j.at("tau2").get<double>());
}

Json model_to_json(const CovarianceModel& m) {
  Json j;
  j["sigma2"] = m.matern.sigma2;
  j["nu"] = m.matern.nu;
  j["range"] = Json{{"kind", "scale"}, {"value", m.matern.scale}};
  j["tau2"] = m.tau2;
  return j;
}

Json loglik_to_json(const LoglikResult& r, const std::string& plan_hash) {
  Json j;
  j["loglik"] = r.loglik;
  j["pieces"] = Json{{"sum_logdet_D", r.sum_logdet_D},
                     {"two_sum_log_V_diag", r.two_sum_log_V_diag},
                     {"z_quad", r.z_quad},
                     {"posterior_quad", r.posterior_quad},
                     {"norm_const", r.norm_const}};
  j["plan_hash"] = plan_hash;
  return j;
}

Json posterior_to_json(const PosteriorSummary& p, const std::string& plan_hash) {
  Json j;
  Json mean = Json::array();
  for (int i = 0; i < p.mean.size(); ++i) mean.push_back(p.mean[i]);
  j["mean"] = mean;
  if (p.marginal_var) {
    Json mv = Json::array();
    for (int i = 0; i < p.marginal_var->size(); ++i) mv.push_back((*p.marginal_var)[i]);
    j["marginal_var"] = mv;
  }
  j["plan_hash"] = plan_hash;
  return j;
}

void write_pattern_csv(const std::string& path, const SparsityPattern& p) {
  std::ostringstream out;
  out << "row,col\n";
  for (int c = 0; c < p.n; ++c) {
    for (int r : p.cols[c]) out << (r + 1) << "," << (c + 1) << "\n";
  }
  write_text_file(path, out.str());
}

void write_sparse_csv(const std::string& path, const SparseUpper& u) {
  std::ostringstream out;
  out << "row,col,value\n";
  for (int c = 0; c < u.n; ++c) {
    for (int p = u.col_ptr[c]; p < u.col_ptr[c + 1]; ++p) {
      out << (u.row_idx[p] + 1) << "," << (c + 1) << "," << format_double(u.values[p]) << "\n";
    }
  }
  write_text_file(path, out.str());
}

}  // namespace vecchia

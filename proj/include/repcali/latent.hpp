#pragma once

// Pooled encoder latents, 2-D projections (PCA, exact t-SNE), compactness
// statistics and CSV/SVG scatter output.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "repcali/checkpoint.hpp"
#include "repcali/errors.hpp"
#include "repcali/model.hpp"
#include "repcali/random.hpp"
#include "repcali/tasks.hpp"
#include "repcali/trainer.hpp"

namespace repcali {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

enum class Pooling { mean, first };

inline Pooling pooling_from_string(const std::string& s) {
  if (s == "mean") return Pooling::mean;
  if (s == "first") return Pooling::first;
  throw ValueError("unknown pooling '" + s + "' (expected mean or first)");
}

struct LatentSet {
  Matrix x;  // [N, d_h]
  std::vector<int> labels;
  std::string provenance;
};

/// Class label of an example for latent plots.
inline int latent_label(const Example& ex, const std::string& scheme, int tag) {
  const std::size_t skip = tag >= 0 ? 1 : 0;
  if (scheme == "length") return static_cast<int>(ex.src.size() - skip);
  if (scheme == "first_token") return ex.src.at(skip);
  if (scheme == "last_token") return ex.src.back();
  throw ValueError("unknown label scheme '" + scheme + "'");
}

/// One pooled row per example from the decoder-facing latent (calibrated when
/// the model carries a calibration block and `calibrated` is set).
template <class T>
LatentSet extract_latents(const Seq2SeqModel<T>& model, const std::vector<Example>& examples, Pooling pooling,
                          bool calibrated = true) {
  if (examples.empty()) throw ValueError("extract_latents: empty split");
  NoGradGuard<T> off;
  const std::size_t d = model.config().d_h;
  LatentSet out;
  out.x.resize(static_cast<Eigen::Index>(examples.size()), static_cast<Eigen::Index>(d));
  for (const auto& idx : length_buckets(examples, 64, nullptr)) {
    const Batch b = make_batch(examples, idx);
    auto h = calibrated ? model.latent(b.src) : model.encode(b.src);
    const std::size_t t = h.dim(1);
    const auto hv = h.data();
    for (std::size_t j = 0; j < idx.size(); ++j) {
      for (std::size_t e = 0; e < d; ++e) {
        double v = 0.0;
        if (pooling == Pooling::first) {
          v = hv[(j * t) * d + e];
        } else {
          for (std::size_t p = 0; p < t; ++p) v += hv[(j * t + p) * d + e];
          v /= static_cast<double>(t);
        }
        out.x(static_cast<Eigen::Index>(idx[j]), static_cast<Eigen::Index>(e)) = v;
      }
    }
  }
  out.provenance = std::string("pooling=") + (pooling == Pooling::mean ? "mean" : "first");
  return out;
}

struct Projection2D {
  Matrix coords;  // [N, k]
  std::string method;
  std::vector<double> explained;  // PCA: variance fraction per component, descending
  Matrix components;              // PCA: [k, d] orthonormal rows
  double kl_initial = std::numeric_limits<double>::quiet_NaN();  // t-SNE: KL right after exaggeration ends
  double kl_final = std::numeric_limits<double>::quiet_NaN();
};

/// Centered projection onto the top-k eigenvectors of the covariance.
inline Projection2D pca_project(const Matrix& x, std::size_t k = 2) {
  const auto n = x.rows(), d = x.cols();
  if (n <= static_cast<Eigen::Index>(k)) throw ValueError("pca_project: need more than k points");
  if (static_cast<Eigen::Index>(k) > d) throw ValueError("pca_project: k exceeds dimensionality");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Matrix centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
  if (es.info() != Eigen::Success) throw ValueError("pca_project: eigen-decomposition failed");
  const Eigen::VectorXd evals = es.eigenvalues();  // ascending
  const double top = std::max(evals(d - 1), 0.0);
  const double total = std::max(evals.sum(), 0.0);
  std::size_t rank = 0;
  for (Eigen::Index i = 0; i < d; ++i) rank += evals(i) > 1e-12 * std::max(top, 1e-300) && evals(i) > 0.0;
  if (rank < k) {
    throw ValueError("pca_project: data rank " + std::to_string(rank) + " is below k = " + std::to_string(k));
  }
  Projection2D p;
  p.method = "pca";
  p.components.resize(static_cast<Eigen::Index>(k), d);
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::VectorXd v = es.eigenvectors().col(d - 1 - static_cast<Eigen::Index>(c));
    Eigen::Index arg;
    v.cwiseAbs().maxCoeff(&arg);
    if (v(arg) < 0) v = -v;  // deterministic sign
    p.components.row(static_cast<Eigen::Index>(c)) = v.transpose();
    p.explained.push_back(evals(d - 1 - static_cast<Eigen::Index>(c)) / total);
  }
  p.coords = centered * p.components.transpose();
  return p;
}

// ---- t-SNE -------------------------------------------------------------------

struct TsneOptions {
  double perplexity = 30.0;
  std::size_t iters = 1000;
  std::uint64_t seed = 5;
  double learning_rate = 0.0;  // 0 = max(N / 12, 50)
  double exaggeration = 12.0;
  std::size_t exaggeration_iters = 250;
  double momentum_start = 0.5;
  double momentum_final = 0.8;
  std::size_t momentum_switch = 250;
};

inline Matrix pairwise_sq_distances(const Matrix& x) {
  const auto n = x.rows();
  Matrix d(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) d(i, j) = d(j, i) = (x.row(i) - x.row(j)).squaredNorm();
  }
  return d;
}

/// Symmetric joint affinities P (sum 1) from per-point Gaussian bandwidths
/// chosen by binary search to match the perplexity.
inline Matrix tsne_affinities(const Matrix& x, double perplexity) {
  const auto n = x.rows();
  if (n < 2) throw ValueError("t-SNE needs at least two points");
  if (perplexity < 5.0 || perplexity > static_cast<double>(n - 1) / 3.0) {
    throw ValueError("t-SNE perplexity " + std::to_string(perplexity) + " infeasible for N = " + std::to_string(n) +
                     " (need 5 <= perplexity <= (N-1)/3)");
  }
  const Matrix d2 = pairwise_sq_distances(x);
  const double target = std::log(perplexity);
  Matrix p = Matrix::Zero(n, n);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
    double dmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dmin = std::min(dmin, d2(i, j));
    for (int it = 0; it < 50; ++it) {
      double sum = 0.0, wsum = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) {
        row[j] = j == i ? 0.0 : std::exp(-beta * (d2(i, j) - dmin));
        sum += row[j];
        wsum += row[j] * (d2(i, j) - dmin);
      }
      const double h = std::log(sum) + beta * wsum / sum;  // entropy in nats
      const double diff = h - target;
      if (std::fabs(diff) < 1e-5) break;
      if (diff > 0) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
      } else {
        hi = beta;
        beta = (beta + lo) / 2.0;
      }
    }
    double sum = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) sum += row[j];
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = row[j] / sum;
  }
  Matrix sym = (p + p.transpose()) / (2.0 * static_cast<double>(n));
  return sym;
}

namespace detail {

// Student-t kernel numerators and their sum.
inline double tsne_q(const Matrix& y, Matrix& num) {
  const auto n = y.rows();
  num.resize(n, n);
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    num(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double v = 1.0 / (1.0 + (y.row(i) - y.row(j)).squaredNorm());
      num(i, j) = num(j, i) = v;
      sum += 2.0 * v;
    }
  }
  return sum;
}

inline double tsne_kl(const Matrix& p, const Matrix& num, double qsum) {
  constexpr double floor = 1e-12;
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.rows(); ++i)
    for (Eigen::Index j = 0; j < p.cols(); ++j)
      if (i != j && p(i, j) > 0.0) kl += p(i, j) * std::log(p(i, j) / std::max(num(i, j) / qsum, floor));
  return kl;
}

}  // namespace detail

inline Projection2D tsne_project(const Matrix& x, const TsneOptions& opt = {}) {
  const auto n = x.rows();
  if (n > 5000) throw ValueError("t-SNE limited to N <= 5000");
  const Matrix p = tsne_affinities(x, opt.perplexity);
  const double lr = opt.learning_rate > 0.0 ? opt.learning_rate : std::max(static_cast<double>(n) / 12.0, 50.0);
  SplitMix64 rng(opt.seed);
  Matrix y(n, 2), update = Matrix::Zero(n, 2), gains = Matrix::Ones(n, 2), grad(n, 2), num;
  for (Eigen::Index i = 0; i < n; ++i)
    for (int c = 0; c < 2; ++c) y(i, c) = rng.normal(0.0, 1e-4);

  Projection2D out;
  out.method = "tsne";
  for (std::size_t it = 0; it < opt.iters; ++it) {
    if (it == opt.exaggeration_iters) {
      const double qsum = detail::tsne_q(y, num);
      out.kl_initial = detail::tsne_kl(p, num, qsum);
    }
    const double exag = it < opt.exaggeration_iters ? opt.exaggeration : 1.0;
    const double momentum = it < opt.momentum_switch ? opt.momentum_start : opt.momentum_final;
    const double qsum = detail::tsne_q(y, num);
    grad.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        if (i == j) continue;
        const double w = (exag * p(i, j) - num(i, j) / qsum) * num(i, j);
        grad(i, 0) += 4.0 * w * (y(i, 0) - y(j, 0));
        grad(i, 1) += 4.0 * w * (y(i, 1) - y(j, 1));
      }
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      for (int c = 0; c < 2; ++c) {
        const bool same_sign = (grad(i, c) > 0) == (update(i, c) > 0);
        gains(i, c) = same_sign ? std::max(gains(i, c) * 0.8, 0.01) : gains(i, c) + 0.2;
        update(i, c) = momentum * update(i, c) - lr * gains(i, c) * grad(i, c);
        y(i, c) += update(i, c);
      }
    }
    const Eigen::RowVectorXd mean = y.colwise().mean();
    y = y.rowwise() - mean;
  }
  const double qsum = detail::tsne_q(y, num);
  out.kl_final = detail::tsne_kl(p, num, qsum);
  if (std::isnan(out.kl_initial)) out.kl_initial = out.kl_final;
  out.coords = y;
  return out;
}

// ---- compactness -------------------------------------------------------------

/// Mean silhouette coefficient; every label needs at least two members.
inline double silhouette(const Matrix& x, const std::vector<int>& labels) {
  const auto n = x.rows();
  std::map<int, std::size_t> sizes;
  for (int l : labels) ++sizes[l];
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    std::map<int, double> dsum;
    for (Eigen::Index j = 0; j < n; ++j)
      if (j != i) dsum[labels[j]] += (x.row(i) - x.row(j)).norm();
    const int own = labels[i];
    const double a = dsum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [l, s] : dsum)
      if (l != own) b = std::min(b, s / static_cast<double>(sizes[l]));
    const double m = std::max(a, b);
    total += m > 0.0 ? (b - a) / m : 0.0;
  }
  return total / static_cast<double>(n);
}

struct CompactnessStats {
  double mean_intra = 0.0;           // mean pairwise distance over same-label pairs
  double mean_inter_centroid = 0.0;  // mean distance between label centroids
  double silhouette = 0.0;
};

inline CompactnessStats compactness_stats(const Matrix& x, const std::vector<int>& labels) {
  if (static_cast<std::size_t>(x.rows()) != labels.size()) throw ValueError("compactness_stats: label count mismatch");
  std::map<int, std::vector<Eigen::Index>> groups;
  for (std::size_t i = 0; i < labels.size(); ++i) groups[labels[i]].push_back(static_cast<Eigen::Index>(i));
  if (groups.size() < 2) throw ValueError("compactness_stats: need at least two labels");
  for (const auto& [l, g] : groups)
    if (g.size() < 2) throw ValueError("compactness_stats: label " + std::to_string(l) + " has fewer than two members");
  CompactnessStats s;
  double intra = 0.0;
  std::size_t pairs = 0;
  std::vector<Eigen::RowVectorXd> centroids;
  for (const auto& [l, g] : groups) {
    Eigen::RowVectorXd c = Eigen::RowVectorXd::Zero(x.cols());
    for (std::size_t a = 0; a < g.size(); ++a) {
      c += x.row(g[a]);
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        intra += (x.row(g[a]) - x.row(g[b])).norm();
        ++pairs;
      }
    }
    centroids.push_back(c / static_cast<double>(g.size()));
  }
  s.mean_intra = intra / static_cast<double>(pairs);
  double inter = 0.0;
  std::size_t cpairs = 0;
  for (std::size_t a = 0; a < centroids.size(); ++a)
    for (std::size_t b = a + 1; b < centroids.size(); ++b) {
      inter += (centroids[a] - centroids[b]).norm();
      ++cpairs;
    }
  s.mean_inter_centroid = inter / static_cast<double>(cpairs);
  s.silhouette = silhouette(x, labels);
  return s;
}

// ---- plot output ---------------------------------------------------------------

struct PlotPoint {
  double x = 0.0, y = 0.0;
  int label = 0;
};

/// Writes `<prefix>.csv` (x,y,label) and `<prefix>.svg`.
inline void emit_plot(const Projection2D& proj, const std::vector<int>& labels, const std::string& prefix) {
  const auto n = proj.coords.rows();
  if (n == 0) throw ValueError("emit_plot: empty projection");
  if (proj.coords.cols() < 2) throw ValueError("emit_plot: projection must have two columns");
  if (static_cast<std::size_t>(n) != labels.size()) throw ValueError("emit_plot: label count mismatch");

  std::ofstream csv(prefix + ".csv");
  if (!csv) throw IoError("cannot open " + prefix + ".csv for writing");
  csv << "x,y,label\n";
  char buf[128];
  for (Eigen::Index i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof buf, "%.6f,%.6f,%d\n", proj.coords(i, 0), proj.coords(i, 1), labels[i]);
    csv << buf;
  }
  if (!csv) throw IoError("write failed for " + prefix + ".csv");

  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                  "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const std::set<int> uniq(labels.begin(), labels.end());
  std::map<int, std::size_t> color;
  for (int l : uniq) color.emplace(l, color.size());
  const double w = 480, h = 480, pad = 20, legend_w = 110;
  double xmin = proj.coords.col(0).minCoeff(), xmax = proj.coords.col(0).maxCoeff();
  double ymin = proj.coords.col(1).minCoeff(), ymax = proj.coords.col(1).maxCoeff();
  const double sx = xmax > xmin ? (w - 2 * pad) / (xmax - xmin) : 1.0;
  const double sy = ymax > ymin ? (h - 2 * pad) / (ymax - ymin) : 1.0;

  std::ofstream svg(prefix + ".svg");
  if (!svg) throw IoError("cannot open " + prefix + ".svg for writing");
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w + legend_w << "\" height=\"" << h << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const double cx = pad + (proj.coords(i, 0) - xmin) * sx, cy = h - pad - (proj.coords(i, 1) - ymin) * sy;
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"3\" fill=\"%s\" fill-opacity=\"0.8\"/>\n", cx,
                  cy, palette[color[labels[i]] % 10]);
    svg << buf;
  }
  double ly = pad;
  for (int l : uniq) {
    svg << "<rect x=\"" << w + 5 << "\" y=\"" << ly << "\" width=\"10\" height=\"10\" fill=\"" << palette[color[l] % 10]
        << "\"/>";
    svg << "<text x=\"" << w + 20 << "\" y=\"" << ly + 9 << "\" font-size=\"11\" font-family=\"sans-serif\">" << l
        << "</text>\n";
    ly += 15;
  }
  svg << "</svg>\n";
  if (!svg) throw IoError("write failed for " + prefix + ".svg");
}

inline std::vector<PlotPoint> read_plot_csv(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  std::getline(is, line);
  if (line != "x,y,label") throw IoError(path + ": unexpected header '" + line + "'");
  std::vector<PlotPoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    PlotPoint p;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> p.x >> c1 >> p.y >> c2 >> p.label) || c1 != ',' || c2 != ',') throw IoError(path + ": malformed row");
    out.push_back(p);
  }
  return out;
}

// ---- persistence in the checkpoint container --------------------------------

inline void save_latents(const std::string& path, const LatentSet& s, const std::string& name = "set") {
  if (s.x.rows() == 0 || s.labels.size() != static_cast<std::size_t>(s.x.rows())) {
    throw ValueError("save_latents: need one label per row, got " + std::to_string(s.labels.size()) + " labels for " +
                     std::to_string(s.x.rows()) + " rows");
  }
  CheckpointData data;
  data.config = s.provenance;
  std::vector<float> xs(static_cast<std::size_t>(s.x.size()));
  for (Eigen::Index i = 0; i < s.x.rows(); ++i)
    for (Eigen::Index j = 0; j < s.x.cols(); ++j) xs[static_cast<std::size_t>(i * s.x.cols() + j)] = static_cast<float>(s.x(i, j));
  data.tensors.emplace("latents/" + name, Tensor({static_cast<std::size_t>(s.x.rows()), static_cast<std::size_t>(s.x.cols())}, xs));
  std::vector<float> ls(s.labels.begin(), s.labels.end());
  data.tensors.emplace("latents/" + name + ".labels", Tensor({ls.size()}, ls));
  save_checkpoint_data(path, data);
}

inline LatentSet load_latents(const std::string& path, const std::string& name = "set") {
  auto data = load_checkpoint_data(path);
  auto xi = data.tensors.find("latents/" + name);
  auto li = data.tensors.find("latents/" + name + ".labels");
  if (xi == data.tensors.end() || li == data.tensors.end()) {
    throw CheckpointError(CheckpointError::Kind::missing_tensor, path + ": no latent set '" + name + "'");
  }
  LatentSet s;
  s.provenance = data.config;
  const auto& t = xi->second;
  s.x.resize(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (std::size_t i = 0; i < t.numel(); ++i) s.x.data()[i] = t[i];
  for (float v : li->second.data()) s.labels.push_back(static_cast<int>(v));
  return s;
}

}  // namespace repcali

#include "dicke/spectrum.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <boost/math/tools/roots.hpp>

#include "dicke/mqc.hpp"

namespace dicke {

std::string window_tag(EnergyWindow w) { return w == EnergyWindow::Below ? "below" : "above"; }

// ---- level statistics ------------------------------------------------------

namespace {

// Chebyshev basis on [-1, 1] keeps the degree-7 fit well conditioned.
Eigen::MatrixXd chebyshev_design(const Eigen::VectorXd& x, int degree) {
  Eigen::MatrixXd a(x.size(), degree + 1);
  a.col(0).setOnes();
  if (degree >= 1) a.col(1) = x;
  for (int k = 2; k <= degree; ++k) a.col(k) = 2.0 * x.cwiseProduct(a.col(k - 1)) - a.col(k - 2);
  return a;
}

std::vector<double> unfold_once(std::span<const double> levels, int degree) {
  const auto n = static_cast<Eigen::Index>(levels.size());
  const double lo = levels.front(), hi = levels.back();
  const double mid = 0.5 * (lo + hi), half = std::max(0.5 * (hi - lo), 1e-300);
  Eigen::VectorXd x(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    x(i) = (levels[static_cast<std::size_t>(i)] - mid) / half;
    y(i) = static_cast<double>(i) + 0.5;
  }
  const Eigen::MatrixXd a = chebyshev_design(x, degree);
  const Eigen::VectorXd coef = a.colPivHouseholderQr().solve(y);
  const Eigen::VectorXd fit = a * coef;
  return {fit.data(), fit.data() + fit.size()};
}

std::vector<double> spacings_of(const std::vector<double>& xs) {
  std::vector<double> s;
  for (std::size_t i = 1; i < xs.size(); ++i) s.push_back(xs[i] - xs[i - 1]);
  return s;
}

std::vector<double> gap_ratios(std::span<const double> levels) {
  std::vector<double> r;
  for (std::size_t i = 2; i < levels.size(); ++i) {
    const double a = levels[i - 1] - levels[i - 2], b = levels[i] - levels[i - 1];
    const double big = std::max(a, b);
    if (big > 0.0) r.push_back(std::min(a, b) / big);
  }
  return r;
}

void fill_histogram(SpacingStats& st, const LevelStatsOptions& opt) {
  const int bins = std::max(1, opt.histogram_bins);
  const double width = opt.histogram_max / bins;
  st.bin_edges.resize(static_cast<std::size_t>(bins) + 1);
  for (int b = 0; b <= bins; ++b) st.bin_edges[static_cast<std::size_t>(b)] = b * width;
  st.histogram.assign(static_cast<std::size_t>(bins), 0.0);
  std::size_t inside = 0;
  for (double s : st.spacings) {
    const auto b = static_cast<int>(std::floor(s / width));
    if (b < 0 || b >= bins) continue;
    st.histogram[static_cast<std::size_t>(b)] += 1.0;
    ++inside;
  }
  if (inside > 0)
    for (double& h : st.histogram) h /= static_cast<double>(inside) * width;
}

void finish_stats(SpacingStats& st, const std::vector<double>& ratios,
                  const LevelStatsOptions& opt) {
  if (!st.spacings.empty()) {
    st.mean_spacing = std::accumulate(st.spacings.begin(), st.spacings.end(), 0.0) /
                      static_cast<double>(st.spacings.size());
    st.ks_wigner = ks_distance(st.spacings, wigner_cdf);
    st.ks_poisson = ks_distance(st.spacings, poisson_cdf);
  }
  if (!ratios.empty())
    st.mean_r = std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
  st.sufficient = st.levels >= opt.min_levels;
  fill_histogram(st, opt);
}

// Trimmed slice plus unfolded spacings (mean exactly 1) and raw gap ratios.
struct WindowData {
  std::vector<double> spacings;
  std::vector<double> ratios;
  std::size_t levels = 0;
};

WindowData analyse_window(std::span<const double> levels, const LevelStatsOptions& opt) {
  WindowData out;
  if (levels.size() < 3) {
    out.levels = levels.size();
    return out;
  }
  std::vector<double> xs;
  // lower the degree until the fitted staircase is monotone on the window
  for (int degree = std::min<int>(opt.unfold_degree, static_cast<int>(levels.size()) - 2);
       degree >= 1; --degree) {
    xs = unfold_once(levels, degree);
    if (std::is_sorted(xs.begin(), xs.end())) break;
  }
  const auto trim = static_cast<std::size_t>(std::floor(opt.edge_trim * static_cast<double>(levels.size())));
  const std::size_t first = trim, last = levels.size() - trim;  // [first, last)
  if (last <= first + 1) return out;
  out.levels = last - first;
  std::vector<double> kept(xs.begin() + static_cast<std::ptrdiff_t>(first),
                           xs.begin() + static_cast<std::ptrdiff_t>(last));
  out.spacings = spacings_of(kept);
  const double mean = std::accumulate(out.spacings.begin(), out.spacings.end(), 0.0) /
                      static_cast<double>(out.spacings.size());
  for (double& s : out.spacings) s /= mean;
  out.ratios = gap_ratios(levels.subspan(first, last - first));
  return out;
}

}  // namespace

std::vector<double> unfold(std::span<const double> levels, int degree) {
  if (levels.size() < 2) throw ParameterError("unfolding needs at least two levels");
  if (!std::is_sorted(levels.begin(), levels.end())) throw ParameterError("levels must be sorted");
  return unfold_once(levels, std::min<int>(degree, static_cast<int>(levels.size()) - 1));
}

double mean_gap_ratio(std::span<const double> levels) {
  const auto r = gap_ratios(levels);
  if (r.empty()) return 0.0;
  return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

double wigner_cdf(double s) { return s <= 0.0 ? 0.0 : 1.0 - std::exp(-M_PI * s * s / 4.0); }
double poisson_cdf(double s) { return s <= 0.0 ? 0.0 : 1.0 - std::exp(-s); }

double ks_distance(std::span<const double> samples, double (*cdf)(double)) {
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const double n = static_cast<double>(s.size());
  double d = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double f = cdf(s[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

SpacingStats spacing_stats(std::span<const double> levels, EnergyWindow w, int sector,
                           const LevelStatsOptions& opt) {
  SpacingStats st;
  st.window = w;
  st.sector = sector;
  WindowData d = analyse_window(levels, opt);
  st.levels = d.levels;
  st.spacings = std::move(d.spacings);
  finish_stats(st, d.ratios, opt);
  return st;
}

std::vector<std::vector<double>> converged_levels(const EigenSystem& es,
                                                  const LevelStatsOptions& opt) {
  const ModelParams& p = es.params();
  const Eigen::Index spin_dim = p.spin_dim();
  const int first_tail_row = std::max(0, p.n_max + 1 - opt.tail_rows);
  std::vector<std::vector<double>> sectors;
  for (std::size_t b = 0; b < es.block_count(); ++b) {
    const auto& blk = es.block(b);
    std::vector<Eigen::Index> tail_rows;
    for (std::size_t i = 0; i < blk.basis.size(); ++i)
      if (blk.basis[i] / spin_dim >= first_tail_row) tail_rows.push_back(static_cast<Eigen::Index>(i));
    std::vector<double> levels;
    for (Eigen::Index c = 0; c < blk.values.size(); ++c) {
      double tail = 0.0;
      for (Eigen::Index r : tail_rows) tail += blk.vectors(r, c) * blk.vectors(r, c);
      if (tail <= opt.tail_threshold) levels.push_back(blk.values(c));
    }
    sectors.push_back(std::move(levels));
  }
  if (!opt.parity_resolved) {
    std::vector<double> all;
    for (const auto& s : sectors) all.insert(all.end(), s.begin(), s.end());
    std::sort(all.begin(), all.end());
    return {all};
  }
  return sectors;
}

std::vector<SpacingStats> level_statistics(const EigenSystem& es, double e_c,
                                           const LevelStatsOptions& opt) {
  const auto sectors = converged_levels(es, opt);
  std::vector<SpacingStats> out;
  for (EnergyWindow w : {EnergyWindow::Below, EnergyWindow::Above}) {
    SpacingStats pooled;
    pooled.window = w;
    pooled.sector = -1;
    std::vector<double> pooled_ratios;
    for (std::size_t s = 0; s < sectors.size(); ++s) {
      std::vector<double> slice;
      for (double e : sectors[s]) {
        const bool below = e < e_c;
        if (w == EnergyWindow::Below ? below : (!below && (!opt.energy_max || e <= *opt.energy_max)))
          slice.push_back(e);
      }
      WindowData d = analyse_window(slice, opt);
      SpacingStats st;
      st.window = w;
      st.sector = opt.parity_resolved ? static_cast<int>(s) : -1;
      st.levels = d.levels;
      st.spacings = d.spacings;
      finish_stats(st, d.ratios, opt);
      pooled.levels += d.levels;
      pooled.spacings.insert(pooled.spacings.end(), d.spacings.begin(), d.spacings.end());
      pooled_ratios.insert(pooled_ratios.end(), d.ratios.begin(), d.ratios.end());
      out.push_back(std::move(st));
    }
    if (sectors.size() > 1) {
      finish_stats(pooled, pooled_ratios, opt);
      out.push_back(std::move(pooled));
    }
  }
  return out;
}

// ---- ensembles -------------------------------------------------------------

namespace {

double expectation_energy(const Eigen::VectorXd& e, const Eigen::VectorXd& w) { return e.dot(w); }

Eigen::VectorXd boltzmann(const Eigen::VectorXd& e, double beta) {
  const double ref = beta >= 0.0 ? e.minCoeff() : e.maxCoeff();
  Eigen::VectorXd w = (-beta * (e.array() - ref)).exp().matrix();
  return w / w.sum();
}

}  // namespace

EnsembleSpec thermal_ensemble(const EigenSystem& es, const StateVector& psi0, double tolerance) {
  const Eigen::VectorXcd c = es.to_eigenbasis(psi0);
  const double target = es.energies().dot(c.cwiseAbs2());
  EnsembleSpec out = thermal_ensemble(es, target, tolerance);
  out.reference = psi0.recipe();
  return out;
}

EnsembleSpec thermal_ensemble(const EigenSystem& es, double target, double tolerance) {
  const Eigen::VectorXd& e = es.energies();
  const double lo = e.minCoeff(), hi = e.maxCoeff();
  if (!(target > lo && target < hi))
    throw ParameterError("target energy lies outside the spectral range");
  const double mean = e.mean();
  auto f = [&](double beta) { return expectation_energy(e, boltzmann(e, beta)) - target; };

  EnsembleSpec out;
  out.kind = EnsembleKind::Thermal;
  out.target_energy = target;
  double beta = 0.0;
  if (target != mean) {
    // <E>(beta) decreases monotonically; bracket on the side of the target
    const double dir = target < mean ? 1.0 : -1.0;
    double a = 0.0, b = dir / (hi - lo);
    while (f(b) * dir > 0.0) {
      a = b;
      b *= 2.0;
      if (std::abs(b) > 1e12) throw ParameterError("thermal root not bracketed");
    }
    std::uintmax_t iters = 200;
    const auto tol = [tolerance, scale = std::max(std::abs(target), 1.0), &f](double x, double y) {
      return std::abs(x - y) <= 1e-15 * std::max(std::abs(x), std::abs(y)) ||
             std::min(std::abs(f(x)), std::abs(f(y))) <= tolerance * scale;
    };
    const auto [x0, x1] = boost::math::tools::toms748_solve(f, std::min(a, b), std::max(a, b), tol, iters);
    beta = std::abs(f(x0)) < std::abs(f(x1)) ? x0 : x1;
  }
  out.beta = beta;
  out.negative_temperature = beta < 0.0;
  out.weights = boltzmann(e, beta);
  out.energy = expectation_energy(e, out.weights);
  out.matching_residual = std::abs(out.energy - target) / std::max(std::abs(target), 1.0);
  return out;
}

EnsembleSpec diagonal_ensemble(const EigenSystem& es, const StateVector& psi0) {
  EnsembleSpec out;
  out.kind = EnsembleKind::Diagonal;
  out.weights = es.to_eigenbasis(psi0).cwiseAbs2();
  out.target_energy = es.energies().dot(out.weights);
  out.weights /= out.weights.sum();
  out.energy = es.energies().dot(out.weights);
  out.matching_residual = std::abs(out.energy - out.target_energy) / std::max(std::abs(out.target_energy), 1.0);
  out.reference = psi0.recipe();
  return out;
}

namespace {

// Weighted blocks restricted to columns that carry weight.
Eigen::MatrixXd weighted_columns(const EigenSystem& es, std::size_t b, const Eigen::VectorXd& w) {
  const auto& blk = es.block(b);
  std::vector<Eigen::Index> cols;
  for (Eigen::Index c = 0; c < blk.values.size(); ++c)
    if (w(es.global_index(b, c)) > 0.0) cols.push_back(c);
  Eigen::MatrixXd out(blk.vectors.rows(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t i = 0; i < cols.size(); ++i)
    out.col(static_cast<Eigen::Index>(i)) =
        blk.vectors.col(cols[i]) * std::sqrt(w(es.global_index(b, cols[i])));
  return out;
}

}  // namespace

Eigen::MatrixXd ensemble_spin_matrix(const EigenSystem& es, const Eigen::VectorXd& weights) {
  if (weights.size() != es.dim()) throw ParameterError("weights have wrong length");
  const ModelParams& p = es.params();
  const Eigen::Index sd = p.spin_dim();
  Eigen::MatrixXd rho_x = Eigen::MatrixXd::Zero(sd, sd);
  for (std::size_t b = 0; b < es.block_count(); ++b) {
    const auto& blk = es.block(b);
    const Eigen::MatrixXd vw = weighted_columns(es, b, weights);
    if (vw.cols() == 0) continue;
    // rows sharing a Fock level contribute V_n V_n^T to the spin block
    std::vector<std::vector<Eigen::Index>> rows(static_cast<std::size_t>(p.fock_dim()));
    for (std::size_t i = 0; i < blk.basis.size(); ++i)
      rows[static_cast<std::size_t>(blk.basis[i] / sd)].push_back(static_cast<Eigen::Index>(i));
    for (const auto& r : rows) {
      if (r.empty()) continue;
      const Eigen::MatrixXd vn = vw(r, Eigen::all);
      const Eigen::MatrixXd g = vn * vn.transpose();
      for (std::size_t a = 0; a < r.size(); ++a)
        for (std::size_t c = 0; c < r.size(); ++c)
          rho_x(blk.basis[static_cast<std::size_t>(r[a])] % sd, blk.basis[static_cast<std::size_t>(r[c])] % sd) +=
              g(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(c));
    }
  }
  const Eigen::MatrixXd& t = es.spin_transform();
  return t * rho_x * t.transpose();
}

Distributions ensemble_distributions(const EigenSystem& es, const EnsembleSpec& ens) {
  const ModelParams& p = es.params();
  const Eigen::Index sd = p.spin_dim();
  Distributions d;
  d.p_mz = ensemble_spin_matrix(es, ens.weights).diagonal();
  d.p_n = Eigen::VectorXd::Zero(p.fock_dim());
  for (std::size_t b = 0; b < es.block_count(); ++b) {
    const auto& blk = es.block(b);
    Eigen::VectorXd wb(blk.values.size());
    for (Eigen::Index c = 0; c < wb.size(); ++c) wb(c) = ens.weights(es.global_index(b, c));
    const Eigen::VectorXd rows = blk.vectors.cwiseAbs2() * wb;
    for (std::size_t i = 0; i < blk.basis.size(); ++i) d.p_n(blk.basis[i] / sd) += rows(static_cast<Eigen::Index>(i));
  }
  return d;
}

namespace {

Distributions average_over(std::size_t count, int n_spins, int n_max,
                           const std::function<void(const std::function<void(const StateVector&)>&)>& each) {
  Distributions d;
  d.p_mz = Eigen::VectorXd::Zero(n_spins + 1);
  d.p_n = Eigen::VectorXd::Zero(n_max + 1);
  each([&](const StateVector& s) {
    d.p_mz += s.spin_distribution();
    d.p_n += s.fock_distribution();
  });
  d.p_mz /= static_cast<double>(count);
  d.p_n /= static_cast<double>(count);
  return d;
}

}  // namespace

Distributions time_averaged_distributions(const StateVector& psi0, const EigenSystem& es,
                                          std::span<const double> times) {
  if (times.empty()) throw ParameterError("empty averaging window");
  return average_over(times.size(), psi0.n_spins(), psi0.n_max(), [&](const auto& visit) {
    for (const auto& s : es.evolve_many(psi0, times)) visit(s);
  });
}

Distributions time_averaged_distributions(const StateVector& psi0,
                                          const ChebyshevPropagator& prop,
                                          std::span<const double> times) {
  if (times.empty()) throw ParameterError("empty averaging window");
  return average_over(times.size(), psi0.n_spins(), psi0.n_max(), [&](const auto& visit) {
    prop.evolve_visit(psi0, times, [&](std::size_t, const StateVector& s) { visit(s); });
  });
}

double total_variation(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) throw ParameterError("distributions differ in length");
  return 0.5 * (p - q).cwiseAbs().sum();
}

std::vector<double> ensemble_subsystem_renyi(const EigenSystem& es, const EnsembleSpec& ens) {
  const int n = es.params().n_spins;
  const Eigen::MatrixXcd rho = ensemble_spin_matrix(es, ens.weights).cast<cplx>();
  std::vector<double> out;
  for (int l = 1; l <= n; ++l) {
    const Eigen::MatrixXcd ra = partial_trace_spins(rho, n, l);
    out.push_back(renyi2(ra.cwiseAbs2().sum()));
  }
  return out;
}

}  // namespace dicke

#include "dicke/twa.hpp"

#include <atomic>
#include <cmath>
#include <random>
#include <sstream>
#include <mutex>
#include <thread>

namespace dicke {

WignerRecipe WignerRecipe::parse(const std::string& text) {
  std::istringstream in(text);
  std::string head;
  in >> head;
  if (head == "critical") {
    std::string rest;
    if (in >> rest) throw ParameterError("unexpected token after 'critical': " + rest);
    return critical();
  }
  if (head != "coherent") throw ParameterError("unsupported TWA initial state: " + text);
  WignerRecipe r;
  r.axis = BlochAxis::z();
  double ar = 0.0, ai = 0.0;
  std::string tok;
  while (in >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw ParameterError("expected key=value in recipe: " + tok);
    const std::string key = tok.substr(0, eq);
    const double value = std::stod(tok.substr(eq + 1));
    if (key == "theta") r.axis.theta = value;
    else if (key == "phi") r.axis.phi = value;
    else if (key == "sign") r.sign = value < 0 ? -1 : 1;
    else if (key == "alpha_r") ar = value;
    else if (key == "alpha_i") ai = value;
    else throw ParameterError("unknown recipe key: " + key);
  }
  r.alpha = cplx(ar, ai);
  return r;
}

std::string WignerRecipe::tag() const {
  std::ostringstream out;
  out.precision(17);
  out << "coherent theta=" << axis.theta << " phi=" << axis.phi << " sign=" << sign
      << " alpha_r=" << alpha.real() << " alpha_i=" << alpha.imag();
  return out.str();
}

PhasePoint sample_trajectory(int n_spins, const WignerRecipe& recipe, std::uint64_t seed,
                             std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  std::mt19937_64 rng(seq);
  std::normal_distribution<double> normal;
  const double th = recipe.axis.theta, ph = recipe.axis.phi;
  const Eigen::Vector3d e = recipe.axis.vector() * (recipe.sign < 0 ? -1.0 : 1.0);
  const Eigen::Vector3d u(std::cos(th) * std::cos(ph), std::cos(th) * std::sin(ph), -std::sin(th));
  const Eigen::Vector3d v(-std::sin(ph), std::cos(ph), 0.0);
  const double spin_sd = std::sqrt(n_spins / 4.0);
  const double xi1 = spin_sd * normal(rng);
  const double xi2 = spin_sd * normal(rng);
  const double b1 = 0.5 * normal(rng);
  const double b2 = 0.5 * normal(rng);
  const Eigen::Vector3d s = 0.5 * n_spins * e + xi1 * u + xi2 * v;
  return {s(0), s(1), s(2), recipe.alpha.real() + b1, recipe.alpha.imag() + b2};
}

namespace {

template <class Fn>
void parallel_for(std::size_t count, int threads, Fn&& fn) {
  threads = std::max(1, threads);
  if (threads == 1 || count < 2) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (int k = 0; k < threads; ++k) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!error) error = std::current_exception();
          next = count;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct Moments {
  double count = 0.0, mean = 0.0, m2 = 0.0;

  void push(double x) {
    count += 1.0;
    const double d = x - mean;
    mean += d / count;
    m2 += d * (x - mean);
  }
  void merge(const Moments& o) {
    if (o.count == 0.0) return;
    if (count == 0.0) {
      *this = o;
      return;
    }
    const double n = count + o.count;
    const double d = o.mean - mean;
    mean += d * o.count / n;
    m2 += o.m2 + d * d * count * o.count / n;
    count = n;
  }
  double variance() const { return count > 1.0 ? m2 / (count - 1.0) : 0.0; }
};

double observe(const PhasePoint& x, TwaObservable o) {
  switch (o) {
    case TwaObservable::X: return x.ar;
    case TwaObservable::Sy: return x.sy;
    case TwaObservable::N: return x.boson_number() - 0.5;
  }
  return 0.0;
}

}  // namespace

WignerEnsemble sample_initial(int n_spins, const WignerRecipe& recipe, std::size_t trajectories,
                              std::uint64_t seed, int threads) {
  if (n_spins < 1) throw ParameterError("n_spins must be positive");
  if (trajectories < 2) throw ParameterError("need at least two trajectories");
  WignerEnsemble ens{n_spins, seed, recipe, std::vector<PhasePoint>(trajectories)};
  parallel_for(trajectories, threads, [&](std::size_t i) {
    ens.points[i] = sample_trajectory(n_spins, recipe, seed, i);
  });
  return ens;
}

std::string observable_tag(TwaObservable o) {
  switch (o) {
    case TwaObservable::X: return "X";
    case TwaObservable::Sy: return "Sy";
    case TwaObservable::N: return "n";
  }
  return "?";
}

const MomentTrack& MomentSeries::track(TwaObservable o) const {
  for (const auto& t : tracks)
    if (t.observable == o) return t;
  throw ParameterError("observable not tracked: " + observable_tag(o));
}

MomentSeries evolve_ensemble(const WignerEnsemble& ensemble, const ModelParams& p,
                             std::span<const double> times, const EnsembleOptions& opt) {
  p.validate();
  if (ensemble.n_spins != p.n_spins) throw ParameterError("ensemble and model disagree on N");
  if (times.empty()) throw ParameterError("empty time grid");
  for (std::size_t i = 0; i < times.size(); ++i)
    if (times[i] < 0.0 || (i > 0 && times[i] <= times[i - 1]))
      throw ParameterError("time grid must be ascending and non-negative");

  const std::size_t R = ensemble.size();
  const std::size_t T = times.size();
  constexpr std::size_t K = kTwaObservables.size();
  const std::size_t B = std::max<std::size_t>(2, std::min(opt.blocks, R));
  const Scaling scaling = (opt.auto_rescale && p.n_spins > 1000) ? Scaling::Rescaled : opt.scaling;
  const MeanField mf{p, PhaseSign::Heisenberg, scaling};
  const double energy_scale = 0.5 * p.n_spins * std::max(p.omega_b(), p.omega_delta());

  // acc[b][t * K + k]
  std::vector<std::vector<Moments>> acc(B, std::vector<Moments>(T * K));
  std::vector<double> spin_drift(B, 0.0), energy_drift(B, 0.0);

  parallel_for(B, opt.threads, [&](std::size_t b) {
    const std::size_t first = b * R / B, last = (b + 1) * R / B;
    auto& a = acc[b];
    for (std::size_t i = first; i < last; ++i) {
      const PhasePoint& x0 = ensemble.points[i];
      const auto traj = integrate(x0, mf, times, opt.integrator);
      const double s0 = x0.spin_norm2();
      const double e0 = mf.energy(x0);
      for (std::size_t t = 0; t < T; ++t) {
        const PhasePoint& x = traj[t];
        const double ds = std::abs(x.spin_norm2() - s0) / s0;
        const double de = std::abs(mf.energy(x) - e0) / energy_scale;
        spin_drift[b] = std::max(spin_drift[b], ds);
        energy_drift[b] = std::max(energy_drift[b], de);
        if (ds > opt.conservation_tolerance || de > opt.conservation_tolerance) {
          std::ostringstream msg;
          msg << "trajectory " << i << " broke conservation at t=" << times[t]
              << " (spin " << ds << ", energy " << de << ")";
          throw ContractViolation(msg.str());
        }
        for (std::size_t k = 0; k < K; ++k) a[t * K + k].push(observe(x, kTwaObservables[k]));
      }
    }
  });

  MomentSeries out;
  out.times.assign(times.begin(), times.end());
  out.trajectories = R;
  out.blocks = B;
  for (std::size_t b = 0; b < B; ++b) {
    out.max_spin_drift = std::max(out.max_spin_drift, spin_drift[b]);
    out.max_energy_drift = std::max(out.max_energy_drift, energy_drift[b]);
  }
  for (std::size_t k = 0; k < K; ++k) {
    MomentTrack tr;
    tr.observable = kTwaObservables[k];
    for (std::size_t t = 0; t < T; ++t) {
      Moments all;
      for (std::size_t b = 0; b < B; ++b) all.merge(acc[b][t * K + k]);
      // leave-one-block-out estimates, merged in fixed order
      std::vector<double> loo(B);
      for (std::size_t skip = 0; skip < B; ++skip) {
        Moments m;
        for (std::size_t b = 0; b < B; ++b)
          if (b != skip) m.merge(acc[b][t * K + k]);
        loo[skip] = m.variance();
      }
      double loo_mean = 0.0;
      for (double v : loo) loo_mean += v;
      loo_mean /= static_cast<double>(B);
      double ss = 0.0;
      for (double v : loo) ss += (v - loo_mean) * (v - loo_mean);
      tr.mean.push_back(all.mean);
      tr.variance.push_back(all.variance());
      tr.stderr_mean.push_back(std::sqrt(all.variance() / all.count));
      tr.stderr_variance.push_back(std::sqrt(ss * (B - 1.0) / B));
    }
    out.tracks.push_back(std::move(tr));
  }
  return out;
}

std::vector<TwaExponent> extract_exponents(const MomentSeries& series,
                                           const FitWindowPolicy& policy) {
  std::vector<TwaExponent> out;
  for (const auto& tr : series.tracks)
    out.push_back({tr.observable, fit_exponential_growth(series.times, tr.variance, policy)});
  return out;
}

}  // namespace dicke

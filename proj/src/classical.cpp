#include "dicke/classical.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <thread>

namespace dicke {

PhasePoint classical_image(int n_spins, BlochAxis axis, int sign, cplx alpha) {
  Eigen::Vector3d e = axis.vector() * (sign >= 0 ? 1.0 : -1.0) * (n_spins / 2.0);
  // cos(pi/2) leaves ~1e-17 behind, enough to push the critical state off
  // its unstable fixed point over a long Lyapunov run
  for (int i = 0; i < 3; ++i)
    if (std::abs(e(i)) < 1e-12 * n_spins) e(i) = 0.0;
  return {e(0), e(1), e(2), alpha.real(), alpha.imag()};
}

PhasePoint critical_point(int n_spins) { return {-n_spins / 2.0, 0.0, 0.0, 0.0, 0.0}; }

namespace {

struct Couplings {
  double spin;   // 4 g / sqrt(N) (bare) or 4 g (rescaled)
  double boson;  // 2 g / sqrt(N) (bare) or g (rescaled)
};

Couplings couplings(const MeanField& mf) {
  const double g = mf.params.omega_g();
  if (mf.scaling == Scaling::Rescaled) return {4.0 * g, g};
  const double rt = std::sqrt(static_cast<double>(mf.params.n_spins));
  return {4.0 * g / rt, 2.0 * g / rt};
}

Vec5 state_scale(const MeanField& mf) {
  if (mf.scaling == Scaling::Rescaled) return Vec5::Ones();
  const double s = mf.params.n_spins / 2.0;
  const double a = std::sqrt(static_cast<double>(mf.params.n_spins));
  return (Vec5() << s, s, s, a, a).finished();
}

}  // namespace

Vec5 MeanField::rhs(const Vec5& x) const {
  const auto [c, c2] = couplings(*this);
  const double sigma = static_cast<double>(static_cast<int>(sign));
  const double d = params.omega_delta();
  const double b = params.omega_b();
  Vec5 f;
  f(0) = -c * x(3) * x(1);
  f(1) = c * x(3) * x(0) - b * x(2);
  f(2) = b * x(1);
  f(3) = sigma * d * x(4);
  f(4) = -sigma * (d * x(3) + c2 * x(2));
  return f;
}

Mat5 MeanField::jacobian(const Vec5& x) const {
  const auto [c, c2] = couplings(*this);
  const double sigma = static_cast<double>(static_cast<int>(sign));
  const double d = params.omega_delta();
  const double b = params.omega_b();
  Mat5 m = Mat5::Zero();
  m(0, 1) = -c * x(3);
  m(0, 3) = -c * x(1);
  m(1, 0) = c * x(3);
  m(1, 2) = -b;
  m(1, 3) = c * x(0);
  m(2, 1) = b;
  m(3, 4) = sigma * d;
  m(4, 2) = -sigma * c2;
  m(4, 3) = -sigma * d;
  return m;
}

double MeanField::energy(const PhasePoint& x) const {
  const double rt = std::sqrt(static_cast<double>(params.n_spins));
  return 4.0 * params.omega_g() / rt * x.ar * x.sz +
         params.omega_delta() * (x.ar * x.ar + x.ai * x.ai) + params.omega_b() * x.sx;
}

Vec5 MeanField::to_internal(const PhasePoint& x) const {
  Vec5 v = x.vec();
  if (scaling == Scaling::Rescaled) {
    const double n = params.n_spins;
    v.head<3>() *= 2.0 / n;
    v.tail<2>() /= std::sqrt(n);
  }
  return v;
}

PhasePoint MeanField::from_internal(const Vec5& v) const {
  Vec5 x = v;
  if (scaling == Scaling::Rescaled) {
    const double n = params.n_spins;
    x.head<3>() *= n / 2.0;
    x.tail<2>() *= std::sqrt(n);
  }
  return PhasePoint::from(x);
}

std::vector<PhasePoint> integrate(const PhasePoint& x0, const MeanField& mf,
                                  std::span<const double> times, const IntegratorOptions& opt) {
  mf.params.validate();
  auto stepper = make_dopri<5>([&mf](const Vec5& y) { return mf.rhs(y); }, state_scale(mf),
                               opt.rtol, opt.atol, opt.initial_step, opt.min_step, opt.max_steps);
  Vec5 y = mf.to_internal(x0);
  std::vector<PhasePoint> out;
  out.reserve(times.size());
  double t = 0.0;
  for (double target : times) {
    if (target < t) throw ParameterError("integration times must be ascending and >= 0");
    stepper.advance(y, t, target);
    t = target;
    out.push_back(mf.from_internal(y));
  }
  return out;
}

LyapunovResult lyapunov_max(const PhasePoint& x0, const MeanField& mf, const LyapunovOptions& opt) {
  mf.params.validate();
  if (!(opt.renorm_interval > 0.0) || !(opt.t_end >= 3.0 * opt.renorm_interval))
    throw ParameterError("lyapunov: need t_end >= 3 renormalization intervals");
  using Vec10 = Eigen::Matrix<double, 10, 1>;
  auto f = [&mf](const Vec10& y) {
    const Vec5 x = y.head<5>();
    Vec10 out;
    out.head<5>() = mf.rhs(x);
    out.tail<5>() = mf.jacobian(x) * y.tail<5>();
    return out;
  };
  Vec10 scale;
  scale.head<5>() = state_scale(mf);
  scale.tail<5>().setOnes();
  auto stepper = make_dopri<10>(f, scale, opt.integrator.rtol, opt.integrator.atol,
                                opt.integrator.initial_step, opt.integrator.min_step,
                                opt.integrator.max_steps);
  Vec10 y;
  y.head<5>() = mf.to_internal(x0);
  y.tail<5>() = opt.tangent.normalized();
  const auto intervals = static_cast<std::size_t>(std::llround(opt.t_end / opt.renorm_interval));
  LyapunovResult r;
  r.times.reserve(intervals);
  r.running.reserve(intervals);
  double log_sum = 0.0;
  for (std::size_t k = 0; k < intervals; ++k) {
    const double t0 = k * opt.renorm_interval;
    const double t1 = (k + 1) * opt.renorm_interval;
    stepper.advance(y, t0, t1);
    const double norm = y.tail<5>().norm();
    if (!(norm > 0.0) || !std::isfinite(norm))
      throw std::runtime_error("tangent vector collapsed or overflowed");
    log_sum += std::log(norm);
    y.tail<5>() /= norm;
    r.times.push_back(t1);
    r.running.push_back(log_sum / t1);
  }
  r.lambda = r.running.back();
  const std::size_t two_thirds = (2 * r.running.size()) / 3;
  r.drift = std::abs(r.lambda - r.running[two_thirds > 0 ? two_thirds - 1 : 0]);
  r.converged = r.drift <= std::max(opt.drift_tolerance * std::abs(r.lambda), opt.drift_floor);
  return r;
}

double critical_point_exponent(const ModelParams& p) {
  // linearization in (alpha_R, S_z): x'' = -K x with
  // K = [[delta^2, 2 g delta / sqrt N], [2 g B sqrt N, B^2]]
  const double g = p.omega_g(), d = p.omega_delta(), b = p.omega_b();
  const double disc = std::sqrt((b * b - d * d) * (b * b - d * d) + 16.0 * g * g * b * d);
  const double kappa = 0.5 * (disc - (b * b + d * d));
  return kappa > 0.0 ? std::sqrt(kappa) : 0.0;
}

TwinResult twin_exponent(const PhasePoint& x0, const MeanField& mf, TwinObservable obs,
                         const TwinOptions& opt) {
  mf.params.validate();
  if (opt.cycles < 1 || opt.points < 3) throw ParameterError("twin_exponent: bad options");
  std::vector<double> times(opt.points);
  for (std::size_t i = 0; i < opt.points; ++i)
    times[i] = opt.t_end * static_cast<double>(i) / static_cast<double>(opt.points - 1);
  const Vec5 scale = state_scale(mf);
  auto observe = [&](const Vec5& v) {
    const PhasePoint x = mf.from_internal(v);
    return obs == TwinObservable::BosonNumber ? x.boson_number() : x.ar;
  };
  // reference trajectory shared by all cycles
  std::vector<Vec5> ref;
  {
    auto stepper = make_dopri<5>([&mf](const Vec5& y) { return mf.rhs(y); }, scale,
                                 opt.integrator.rtol, opt.integrator.atol,
                                 opt.integrator.initial_step, opt.integrator.min_step,
                                 opt.integrator.max_steps);
    Vec5 y = mf.to_internal(x0);
    double t = 0.0;
    for (double target : times) {
      stepper.advance(y, t, target);
      t = target;
      ref.push_back(y);
    }
  }
  TwinResult r;
  std::vector<std::string> reasons;
  for (int c = 0; c < opt.cycles; ++c) {
    std::seed_seq seq{static_cast<std::uint32_t>(opt.seed), static_cast<std::uint32_t>(opt.seed >> 32),
                      static_cast<std::uint32_t>(c), 0x7c1a5u};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> normal;
    Vec5 dir;
    for (int i = 0; i < 5; ++i) dir(i) = normal(rng);
    dir.normalize();
    auto stepper = make_dopri<5>([&mf](const Vec5& y) { return mf.rhs(y); }, scale,
                                 opt.integrator.rtol, opt.integrator.atol,
                                 opt.integrator.initial_step, opt.integrator.min_step,
                                 opt.integrator.max_steps);
    Vec5 y = mf.to_internal(x0) + opt.epsilon * scale.cwiseProduct(dir);
    std::vector<double> sep(times.size());
    double t = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
      stepper.advance(y, t, times[i]);
      t = times[i];
      sep[i] = std::abs(observe(y) - observe(ref[i]));
    }
    const GrowthFit fit = fit_exponential_growth(times, sep, opt.policy);
    if (fit.ok()) r.rates.push_back(fit.rate);
  }
  r.fitted_cycles = static_cast<int>(r.rates.size());
  // a majority of cycles must show an exponential window
  if (2 * r.fitted_cycles <= opt.cycles || r.rates.empty()) return r;
  const MeanEstimate m = mean_ci(r.rates);
  r.status = FitStatus::Ok;
  r.rate = m.mean;
  r.ci_low = m.ci_low;
  r.ci_high = m.ci_high;
  return r;
}

TwinResult lambda_c_nonlinear(const PhasePoint& x0, const MeanField& mf, const TwinOptions& opt) {
  return twin_exponent(x0, mf, TwinObservable::BosonNumber, opt);
}

std::vector<ScanCell> phase_diagram_scan(const ModelParams& base, const ScanOptions& opt) {
  base.validate();
  if (opt.energy_bins < 1 || !(opt.energy_max > opt.energy_min) || opt.samples < 1)
    throw ParameterError("phase_diagram_scan: bad binning");
  const int nb = opt.energy_bins;
  const double width = (opt.energy_max - opt.energy_min) / nb;
  std::vector<ScanCell> cells;
  for (std::size_t fi = 0; fi < opt.field_ratios.size(); ++fi) {
    const ModelParams p = base.with_field_ratio(opt.field_ratios[fi]);
    const MeanField mf{p, PhaseSign::Heisenberg, Scaling::Rescaled};
    const double ec = std::abs(p.esqpt_energy());
    std::vector<double> lam(static_cast<std::size_t>(opt.samples), 0.0);
    std::vector<int> bin(static_cast<std::size_t>(opt.samples), -1);
    auto work = [&](int first, int stride) {
      for (int s = first; s < opt.samples; s += stride) {
        std::seed_seq seq{static_cast<std::uint32_t>(opt.seed),
                          static_cast<std::uint32_t>(opt.seed >> 32),
                          static_cast<std::uint32_t>(fi), static_cast<std::uint32_t>(s)};
        std::mt19937_64 rng(seq);
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        const double cos_t = 2.0 * uni(rng) - 1.0;
        const double phi = 2.0 * M_PI * uni(rng);
        const double r = std::sqrt(static_cast<double>(p.n_spins)) * opt.r_max * std::sqrt(uni(rng));
        const double psi = 2.0 * M_PI * uni(rng);
        const double sin_t = std::sqrt(std::max(0.0, 1.0 - cos_t * cos_t));
        const double half = p.n_spins / 2.0;
        const PhasePoint x{half * sin_t * std::cos(phi), half * sin_t * std::sin(phi), half * cos_t,
                           r * std::cos(psi), r * std::sin(psi)};
        const double e = mf.energy(x) / ec;
        const int b = static_cast<int>(std::floor((e - opt.energy_min) / width));
        if (b < 0 || b >= nb) continue;
        bin[static_cast<std::size_t>(s)] = b;
        lam[static_cast<std::size_t>(s)] = lyapunov_max(x, mf, opt.lyapunov).lambda;
      }
    };
    const int threads = std::max(1, opt.threads);
    if (threads == 1) {
      work(0, 1);
    } else {
      std::vector<std::thread> pool;
      for (int k = 0; k < threads; ++k) pool.emplace_back(work, k, threads);
      for (auto& th : pool) th.join();
    }
    for (int b = 0; b < nb; ++b) {
      ScanCell cell;
      cell.field_ratio = opt.field_ratios[fi];
      cell.sqrt_bc_over_b = std::sqrt(1.0 / opt.field_ratios[fi]);
      cell.energy_center = opt.energy_min + (b + 0.5) * width;
      cell.lambda_max = 0.0;
      for (int s = 0; s < opt.samples; ++s) {
        if (bin[static_cast<std::size_t>(s)] != b) continue;
        cell.lambda_max = cell.samples == 0 ? lam[static_cast<std::size_t>(s)]
                                            : std::max(cell.lambda_max, lam[static_cast<std::size_t>(s)]);
        ++cell.samples;
      }
      cells.push_back(cell);
    }
  }
  return cells;
}

}  // namespace dicke

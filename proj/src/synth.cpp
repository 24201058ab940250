#include "tscl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tscl/error.hpp"

namespace tscl::synth {

namespace {

double bump(double t, double peak, double width) {
  const double z = (t - peak) / width;
  return std::exp(-0.5 * z * z);
}

constexpr std::uint64_t kProfileStream = 0xC1A55ULL;

}  // namespace

double ClassProfile::value(double t, std::size_t channel) const {
  return base[channel] + amp1[channel] * bump(t, peak1, width1) +
         amp2[channel] * bump(t, peak2, width2);
}

void SynthConfig::validate() const {
  TSCL_REQUIRE(n_classes >= 1 && n_per_class >= 1 && n_ts >= 1 && c >= 1, ArgumentError,
               "synth: all counts must be >= 1");
  TSCL_REQUIRE(t >= static_cast<std::size_t>(kMinTimesteps), ArgumentError,
               "synth: T must be >= 8");
  TSCL_REQUIRE(noise_sigma >= 0.0, ArgumentError, "synth: noise_sigma must be >= 0");
  TSCL_REQUIRE(dropout_prob >= 0.0 && dropout_prob < 1.0, ArgumentError,
               "synth: dropout_prob must be in [0, 1)");
  TSCL_REQUIRE(time_shift >= 0.0 && time_stretch >= 0.0 && amplitude_jitter >= 0.0 &&
                   series_perturbation >= 0.0 && spectral_variation >= 0.0,
               ArgumentError, "synth: variability parameters must be >= 0");
}

std::vector<ClassProfile> class_profiles(const SynthConfig& cfg, std::uint64_t seed) {
  const double t = static_cast<double>(cfg.t);
  const double domain_offset = cfg.domain * cfg.domain_shift * t;
  // Spectral signature shared by every class; classes differ mostly in timing.
  RngStream shared(seed, stream_id({kProfileStream}));
  std::vector<double> base(cfg.c), load1(cfg.c), load2(cfg.c);
  for (std::size_t ch = 0; ch < cfg.c; ++ch) {
    base[ch] = shared.uniform(0.05, 0.25);
    load1[ch] = shared.uniform(0.3, 1.0);
    load2[ch] = shared.uniform(0.0, 1.0);
  }
  std::vector<ClassProfile> out;
  for (std::uint32_t k = 0; k < cfg.n_classes; ++k) {
    RngStream rng(seed, stream_id({kProfileStream, k + 1}));
    ClassProfile p;
    p.peak1 = rng.uniform(0.2, 0.45) * t + domain_offset;
    p.width1 = rng.uniform(0.05, 0.12) * t;
    p.peak2 = rng.uniform(0.55, 0.8) * t + domain_offset;
    p.width2 = rng.uniform(0.05, 0.12) * t;
    const double a1 = rng.uniform(0.2, 0.45);
    const double a2 = rng.uniform(0.0, 0.35);
    for (std::size_t ch = 0; ch < cfg.c; ++ch) {
      p.base.push_back(base[ch] * (1.0 + cfg.spectral_variation * rng.normal()));
      p.amp1.push_back(a1 * load1[ch] * (1.0 + cfg.spectral_variation * rng.normal()));
      p.amp2.push_back(a2 * load2[ch] * (1.0 + cfg.spectral_variation * rng.normal()));
    }
    out.push_back(std::move(p));
  }
  return out;
}

Dataset generate(const SynthConfig& cfg, const RngStream& rng) {
  cfg.validate();
  const auto profiles = class_profiles(cfg, rng.seed());
  const std::size_t n = cfg.n_classes * cfg.n_per_class;
  const double t_len = static_cast<double>(cfg.t);
  const double center = 0.5 * (t_len - 1.0);
  std::vector<Sample> samples(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::uint32_t>(i % cfg.n_classes);
    const ClassProfile& prof = profiles[label];
    RngStream srng = rng.substream(StreamPurpose::kSynth, i);
    const double shift = cfg.time_shift * t_len * srng.normal();
    const double stretch = std::max(0.5, 1.0 + cfg.time_stretch * srng.normal());
    const double amp = std::max(0.2, 1.0 + cfg.amplitude_jitter * srng.normal());

    Sample& s = samples[i];
    s.label = label;
    for (std::size_t k = 0; k < cfg.n_ts; ++k) {
      SeriesMatrix m(static_cast<Eigen::Index>(cfg.t), static_cast<Eigen::Index>(cfg.c));
      std::vector<double> offset(cfg.c), wave(cfg.c);
      const double phase = srng.uniform(0.0, 2.0 * std::numbers::pi);
      for (std::size_t ch = 0; ch < cfg.c; ++ch) {
        offset[ch] = cfg.series_perturbation * srng.normal();
        wave[ch] = cfg.series_perturbation * srng.normal();
      }
      for (std::size_t ti = 0; ti < cfg.t; ++ti) {
        const double tt = static_cast<double>(ti);
        const double warped = center + (tt - center) / stretch - shift;
        const double slow = std::sin(2.0 * std::numbers::pi * tt / t_len + phase);
        for (std::size_t ch = 0; ch < cfg.c; ++ch) {
          const double clean = prof.base[ch] + amp * (prof.value(warped, ch) - prof.base[ch]);
          m(static_cast<Eigen::Index>(ti), static_cast<Eigen::Index>(ch)) =
              clean + offset[ch] + wave[ch] * slow + cfg.noise_sigma * srng.normal();
        }
      }
      // Cloud-like contamination: all channels jump toward the series max.
      if (cfg.dropout_prob > 0.0) {
        const Eigen::RowVectorXd top = m.colwise().maxCoeff();
        for (Eigen::Index ti = 0; ti < m.rows(); ++ti) {
          if (!srng.bernoulli(cfg.dropout_prob)) continue;
          const double u = srng.uniform(0.5, 1.0);
          m.row(ti) += (top - m.row(ti)) * u;
        }
      }
      for (Eigen::Index j = 0; j < m.size(); ++j)
        m.data()[j] = static_cast<double>(static_cast<float>(std::clamp(m.data()[j], 0.0, 1.0)));
      s.series.emplace_back(std::move(m));
    }
  }
  return Dataset(std::move(samples), cfg.n_classes, SplitTag::kTrain);
}

}  // namespace tscl::synth

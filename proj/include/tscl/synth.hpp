#pragma once

#include <cstdint>
#include <vector>

#include "tscl/data.hpp"
#include "tscl/rng.hpp"

namespace tscl::synth {

// Seasonal profile of one class: per channel, a base level plus two Gaussian
// bumps that share peak times across channels with channel-specific loadings.
// Loadings scatter around a signature common to all classes.
struct ClassProfile {
  double peak1 = 0.0, width1 = 1.0;
  double peak2 = 0.0, width2 = 1.0;
  std::vector<double> base;
  std::vector<double> amp1;
  std::vector<double> amp2;

  // Noise-free value at (possibly fractional) time t, before clipping.
  double value(double t, std::size_t channel) const;
};

struct SynthConfig {
  std::uint32_t n_classes = 8;
  std::size_t n_per_class = 100;
  std::size_t n_ts = 8;
  std::size_t t = 60;
  std::size_t c = 12;
  double noise_sigma = 0.02;
  double dropout_prob = 0.05;
  // Per-sample phenology timing: shift std and stretch std as fractions of T.
  double time_shift = 0.05;
  double time_stretch = 0.08;
  double amplitude_jitter = 0.1;
  // Amplitude of the per-series smooth perturbation.
  double series_perturbation = 0.02;
  // Class-specific relative deviation of the channel loadings from the
  // spectral signature shared by all classes.
  double spectral_variation = 0.15;
  // Domain d shifts every class's peaks by d * domain_shift * T.
  std::uint32_t domain = 0;
  double domain_shift = 0.05;

  void validate() const;
};

std::vector<ClassProfile> class_profiles(const SynthConfig& cfg, std::uint64_t seed);

// Labeled dataset, samples interleaved by class (sample i has label
// i % n_classes) so that any prefix is class-balanced.
Dataset generate(const SynthConfig& cfg, const RngStream& rng);

}  // namespace tscl::synth

#include "tscl/ssl.hpp"

namespace tscl::ssl {

std::string to_string(Framework f) {
  switch (f) {
    case Framework::kSimclr: return "simclr";
    case Framework::kMoco: return "moco";
    case Framework::kByol: return "byol";
    case Framework::kVicreg: return "vicreg";
  }
  return "unknown";
}

Framework parse_framework(const std::string& name) {
  if (name == "simclr") return Framework::kSimclr;
  if (name == "moco") return Framework::kMoco;
  if (name == "byol") return Framework::kByol;
  if (name == "vicreg") return Framework::kVicreg;
  throw ArgumentError("unknown ssl framework '" + name + "' (simclr, moco, byol, vicreg)");
}

Matrix<double> KeyQueue::contents() const {
  Matrix<double> out(static_cast<Index>(keys_.size()), dim_);
  Index r = 0;
  for (const auto& k : keys_) out.row(r++) = k;
  return out;
}

void KeyQueue::enqueue(const Matrix<double>& keys) {
  if (keys.cols() != dim_)
    throw ArgumentError("KeyQueue: key width " + std::to_string(keys.cols()) + " differs from " +
                        std::to_string(dim_));
  for (Index i = 0; i < keys.rows(); ++i) {
    const double norm = keys.row(i).norm();
    if (!(norm > 0.0)) throw NumericalError("KeyQueue: zero-norm key");
    keys_.push_back(keys.row(i) / norm);
    if (keys_.size() > capacity_) keys_.pop_front();
  }
}

}  // namespace tscl::ssl

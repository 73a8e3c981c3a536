#pragma once

// Trial data model: full-data subject records and the observed data at an
// interim analysis time.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace lagseq {

enum class OutcomeKind { continuous, ordinal, binary };

inline const char* to_string(OutcomeKind k) {
  switch (k) {
    case OutcomeKind::continuous: return "continuous";
    case OutcomeKind::ordinal: return "ordinal";
    case OutcomeKind::binary: return "binary";
  }
  return "?";
}

// Outcome value tagged with its scale. Ordinal levels are 1..c, binary is 0/1.
class Outcome {
 public:
  static Outcome continuous(double y) {
    if (!std::isfinite(y)) throw ValidationError("continuous outcome must be finite");
    return Outcome(OutcomeKind::continuous, y);
  }
  static Outcome ordinal(int level) {
    if (level < 1) throw ValidationError("ordinal outcome level must be >= 1");
    return Outcome(OutcomeKind::ordinal, level);
  }
  static Outcome binary(int y) {
    if (y != 0 && y != 1) throw ValidationError("binary outcome must be 0 or 1");
    return Outcome(OutcomeKind::binary, y);
  }
  static Outcome parse(OutcomeKind kind, double v) {
    switch (kind) {
      case OutcomeKind::continuous: return continuous(v);
      case OutcomeKind::ordinal:
        if (v != std::floor(v)) throw ValidationError("ordinal outcome must be an integer level");
        return ordinal(static_cast<int>(v));
      case OutcomeKind::binary:
        if (v != 0.0 && v != 1.0) throw ValidationError("binary outcome must be 0 or 1");
        return binary(static_cast<int>(v));
    }
    throw ValidationError("unknown outcome kind");
  }

  OutcomeKind kind() const { return kind_; }
  double value() const { return value_; }
  int level() const { return static_cast<int>(value_); }

 private:
  Outcome(OutcomeKind k, double v) : kind_(k), value_(v) {}
  OutcomeKind kind_;
  double value_;
};

// Time-dependent covariates L(u) recorded at strictly increasing times and
// read as a right-continuous step function. Stored row-major.
class CovariatePath {
 public:
  CovariatePath() = default;
  explicit CovariatePath(std::size_t q) : q_(q) {}

  std::size_t dim() const { return q_; }
  std::size_t size() const { return times_.size(); }
  bool empty() const { return times_.empty(); }
  double time(std::size_t k) const { return times_[k]; }
  std::span<const double> row(std::size_t k) const { return {values_.data() + k * q_, q_}; }
  const std::vector<double>& times() const { return times_; }

  void append(double u, std::span<const double> v) {
    if (v.size() != q_) throw ValidationError("covariate row has wrong length");
    if (!times_.empty() && !(u > times_.back()))
      throw ValidationError("covariate path times must be strictly increasing");
    times_.push_back(u);
    values_.insert(values_.end(), v.begin(), v.end());
  }

  // Index of the last record at time <= u, or -1 if none.
  std::ptrdiff_t index_at(double u) const {
    auto it = std::upper_bound(times_.begin(), times_.end(), u);
    return static_cast<std::ptrdiff_t>(it - times_.begin()) - 1;
  }

  // L(u); fallback is returned before the first record.
  std::span<const double> at(double u, std::span<const double> fallback) const {
    auto k = index_at(u);
    return k < 0 ? fallback : row(static_cast<std::size_t>(k));
  }

  CovariatePath truncated(double u) const {
    CovariatePath out(q_);
    auto k = index_at(u) + 1;
    out.times_.assign(times_.begin(), times_.begin() + k);
    out.values_.assign(values_.begin(), values_.begin() + k * static_cast<std::ptrdiff_t>(q_));
    return out;
  }

 private:
  std::size_t q_ = 0;
  std::vector<double> times_;
  std::vector<double> values_;
};

// One enrollee's full data (E, X, A, T, Y, L path).
struct SubjectRecord {
  std::string id;
  double entry = 0.0;
  std::vector<double> x;
  int arm = 0;
  double lag = 0.0;
  Outcome y = Outcome::continuous(0.0);
  CovariatePath path;
};

// Checks the per-record invariants against the follow-up window.
inline void validate_record(const SubjectRecord& r, double T_F) {
  auto where = [&](const char* what) { return "subject " + r.id + ": " + what; };
  if (!(r.entry >= 0.0) || !std::isfinite(r.entry)) throw ValidationError(where("entry_time must be >= 0"));
  if (r.arm != 0 && r.arm != 1) throw ValidationError(where("arm must be 0 or 1"));
  if (!(r.lag > 0.0)) throw ValidationError(where("lag T must be > 0"));
  if (r.lag > T_F) throw ValidationError(where("lag exceeds T_F"));
  for (double v : r.x)
    if (!std::isfinite(v)) throw ValidationError(where("baseline covariate not finite"));
  if (!r.path.empty()) {
    if (r.path.time(0) < 0.0) throw ValidationError(where("covariate time before 0"));
    if (r.path.times().back() > r.lag) throw ValidationError(where("covariate time exceeds T"));
  }
}

// A subject as seen at calendar time t. The outcome is only reachable when
// it has been ascertained.
class ObservedSubject {
 public:
  ObservedSubject(const SubjectRecord& r, double t)
      : id_(r.id), entry_(r.entry), x_(r.x), arm_(r.arm) {
    C_ = t - r.entry;
    delta_ = r.lag <= C_;
    U_ = delta_ ? r.lag : C_;
    if (delta_) y_ = r.y;
    path_ = r.path.truncated(U_);
  }

  const std::string& id() const { return id_; }
  double entry() const { return entry_; }
  const std::vector<double>& x() const { return x_; }
  int arm() const { return arm_; }
  double C() const { return C_; }
  double U() const { return U_; }
  bool delta() const { return delta_; }
  bool has_outcome() const { return y_.has_value(); }
  const Outcome& outcome() const {
    if (!y_) throw std::logic_error("outcome of subject " + id_ + " is not yet ascertained");
    return *y_;
  }
  const CovariatePath& path() const { return path_; }

 private:
  std::string id_;
  double entry_;
  std::vector<double> x_;
  int arm_;
  double C_ = 0.0, U_ = 0.0;
  bool delta_ = false;
  std::optional<Outcome> y_;
  CovariatePath path_;
};

struct InterimSnapshot {
  double t = 0.0;
  double T_F = 0.0;
  std::vector<ObservedSubject> subjects;
  std::size_t n_t = 0;
  std::size_t n_A_t = 0;
  std::vector<double> l_default;  // L(u) before a subject's first record

  std::size_t size() const { return subjects.size(); }
  std::size_t p_x() const { return subjects.empty() ? 0 : subjects.front().x().size(); }
  std::size_t q() const { return l_default.size(); }
};

// Observed data at calendar time t. Subjects with E <= t are enrolled.
inline InterimSnapshot snapshot_at(const std::vector<SubjectRecord>& records, double t, double T_F,
                                   std::vector<double> l_default = {}) {
  if (!(t > 0.0)) throw ValidationError("snapshot time must be > 0");
  InterimSnapshot s;
  s.t = t;
  s.T_F = T_F;
  if (l_default.empty()) {
    for (const auto& r : records)
      if (r.path.dim() > 0) {
        l_default.assign(r.path.dim(), 0.0);
        break;
      }
  }
  s.l_default = std::move(l_default);
  s.subjects.reserve(records.size());
  for (const auto& r : records) {
    if (r.entry > t) continue;
    s.subjects.emplace_back(r, t);
    if (s.subjects.back().C() >= T_F) ++s.n_A_t;
  }
  s.n_t = s.subjects.size();
  return s;
}

}  // namespace lagseq

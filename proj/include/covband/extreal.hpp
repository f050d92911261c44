#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace covband {

// A point on the extended real line [-inf, +inf] with the infinities kept as
// explicit tags. Quantiles of tail-weighted empirical distributions and the
// interval endpoints built from them genuinely take infinite values, and
// tagging beats IEEE sentinels: accidental arithmetic on an infinity throws
// instead of silently producing NaN.
class ExtReal {
 public:
  ExtReal() : tag_(Tag::Finite), value_(0.0) {}

  static ExtReal neg_inf() { return ExtReal(Tag::NegInf, 0.0); }
  static ExtReal pos_inf() { return ExtReal(Tag::PosInf, 0.0); }
  static ExtReal finite(double v) {
    if (!std::isfinite(v)) {
      throw std::invalid_argument("ExtReal::finite requires a finite value");
    }
    return ExtReal(Tag::Finite, v);
  }

  bool is_neg_inf() const { return tag_ == Tag::NegInf; }
  bool is_pos_inf() const { return tag_ == Tag::PosInf; }
  bool is_finite() const { return tag_ == Tag::Finite; }
  bool is_infinite() const { return tag_ != Tag::Finite; }

  // Finite payload; calling this on an infinity is a logic error.
  double value() const {
    if (!is_finite()) {
      throw std::logic_error("ExtReal::value on an infinite value");
    }
    return value_;
  }

  // Lossy view for output formatting only.
  double as_double() const {
    if (is_neg_inf()) return -std::numeric_limits<double>::infinity();
    if (is_pos_inf()) return std::numeric_limits<double>::infinity();
    return value_;
  }

  friend bool operator==(const ExtReal& a, const ExtReal& b) {
    if (a.tag_ != b.tag_) return false;
    return a.tag_ != Tag::Finite || a.value_ == b.value_;
  }
  friend bool operator!=(const ExtReal& a, const ExtReal& b) { return !(a == b); }
  friend bool operator<(const ExtReal& a, const ExtReal& b) {
    if (a.tag_ == Tag::NegInf) return b.tag_ != Tag::NegInf;
    if (a.tag_ == Tag::PosInf) return false;
    if (b.tag_ == Tag::PosInf) return true;
    if (b.tag_ == Tag::NegInf) return false;
    return a.value_ < b.value_;
  }
  friend bool operator>(const ExtReal& a, const ExtReal& b) { return b < a; }
  friend bool operator<=(const ExtReal& a, const ExtReal& b) { return !(b < a); }
  friend bool operator>=(const ExtReal& a, const ExtReal& b) { return !(a < b); }

  std::string str() const {
    if (is_neg_inf()) return "-inf";
    if (is_pos_inf()) return "inf";
    return std::to_string(value_);
  }

 private:
  enum class Tag { NegInf, Finite, PosInf };
  ExtReal(Tag tag, double v) : tag_(tag), value_(v) {}

  Tag tag_;
  double value_;
};

}  // namespace covband

#pragma once

#include <cmath>

#include <Eigen/Core>

namespace laptime {

// Forward-mode dual number carrying one directional derivative (tangent).
// Templated on the underlying scalar so duals nest: DualT<DualT<double>>
// propagates one second-derivative direction.  Model code written against a
// generic Scalar works unchanged with double, Dual, or nested duals.
template <typename T>
struct DualT {
  T v{};  // value
  T d{};  // tangent

  DualT() = default;
  DualT(double value) : v(value), d(0.0) {}  // NOLINT: implicit by design
  DualT(const T& value, const T& deriv) : v(value), d(deriv) {}

  DualT& operator+=(const DualT& o) { v += o.v; d += o.d; return *this; }
  DualT& operator-=(const DualT& o) { v -= o.v; d -= o.d; return *this; }
  DualT& operator*=(const DualT& o) {
    d = d * o.v + v * o.d;
    v = v * o.v;
    return *this;
  }
  DualT& operator/=(const DualT& o) {
    d = (d * o.v - v * o.d) / (o.v * o.v);
    v = v / o.v;
    return *this;
  }
};

using Dual = DualT<double>;
using Dual2 = DualT<DualT<double>>;

inline double value_of(double x) { return x; }
template <typename T>
double value_of(const DualT<T>& x) { return value_of(x.v); }

template <typename T>
DualT<T> operator+(const DualT<T>& a, const DualT<T>& b) {
  return {a.v + b.v, a.d + b.d};
}
template <typename T>
DualT<T> operator-(const DualT<T>& a, const DualT<T>& b) {
  return {a.v - b.v, a.d - b.d};
}
template <typename T>
DualT<T> operator-(const DualT<T>& a) { return {-a.v, -a.d}; }
template <typename T>
DualT<T> operator+(const DualT<T>& a) { return a; }
template <typename T>
DualT<T> operator*(const DualT<T>& a, const DualT<T>& b) {
  return {a.v * b.v, a.d * b.v + a.v * b.d};
}
template <typename T>
DualT<T> operator/(const DualT<T>& a, const DualT<T>& b) {
  return {a.v / b.v, (a.d * b.v - a.v * b.d) / (b.v * b.v)};
}

template <typename T>
DualT<T> operator+(const DualT<T>& a, double b) { return {a.v + b, a.d}; }
template <typename T>
DualT<T> operator+(double a, const DualT<T>& b) { return {a + b.v, b.d}; }
template <typename T>
DualT<T> operator-(const DualT<T>& a, double b) { return {a.v - b, a.d}; }
template <typename T>
DualT<T> operator-(double a, const DualT<T>& b) { return {a - b.v, -b.d}; }
template <typename T>
DualT<T> operator*(const DualT<T>& a, double b) { return {a.v * b, a.d * b}; }
template <typename T>
DualT<T> operator*(double a, const DualT<T>& b) { return {a * b.v, a * b.d}; }
template <typename T>
DualT<T> operator/(const DualT<T>& a, double b) { return {a.v / b, a.d / b}; }
template <typename T>
DualT<T> operator/(double a, const DualT<T>& b) {
  return {a / b.v, -a * b.d / (b.v * b.v)};
}

template <typename T>
bool operator<(const DualT<T>& a, const DualT<T>& b) { return value_of(a) < value_of(b); }
template <typename T>
bool operator>(const DualT<T>& a, const DualT<T>& b) { return value_of(a) > value_of(b); }
template <typename T>
bool operator<=(const DualT<T>& a, const DualT<T>& b) { return value_of(a) <= value_of(b); }
template <typename T>
bool operator>=(const DualT<T>& a, const DualT<T>& b) { return value_of(a) >= value_of(b); }
template <typename T>
bool operator==(const DualT<T>& a, const DualT<T>& b) { return value_of(a) == value_of(b); }
template <typename T>
bool operator!=(const DualT<T>& a, const DualT<T>& b) { return value_of(a) != value_of(b); }
template <typename T>
bool operator<(const DualT<T>& a, double b) { return value_of(a) < b; }
template <typename T>
bool operator>(const DualT<T>& a, double b) { return value_of(a) > b; }
template <typename T>
bool operator<(double a, const DualT<T>& b) { return a < value_of(b); }
template <typename T>
bool operator>(double a, const DualT<T>& b) { return a > value_of(b); }

using std::atan;
using std::atan2;
using std::cos;
using std::exp;
using std::log;
using std::sin;
using std::sqrt;
using std::tan;
using std::tanh;
using std::abs;
using std::pow;

template <typename T>
DualT<T> sqrt(const DualT<T>& a) {
  T s = sqrt(a.v);
  return {s, a.d / (2.0 * s)};
}
template <typename T>
DualT<T> sin(const DualT<T>& a) { return {sin(a.v), a.d * cos(a.v)}; }
template <typename T>
DualT<T> cos(const DualT<T>& a) { return {cos(a.v), -a.d * sin(a.v)}; }
template <typename T>
DualT<T> tan(const DualT<T>& a) {
  T t = tan(a.v);
  return {t, a.d * (1.0 + t * t)};
}
template <typename T>
DualT<T> atan(const DualT<T>& a) {
  return {atan(a.v), a.d / (1.0 + a.v * a.v)};
}
template <typename T>
DualT<T> atan2(const DualT<T>& y, const DualT<T>& x) {
  T denom = x.v * x.v + y.v * y.v;
  return {atan2(y.v, x.v), (x.v * y.d - y.v * x.d) / denom};
}
template <typename T>
DualT<T> tanh(const DualT<T>& a) {
  T t = tanh(a.v);
  return {t, a.d * (1.0 - t * t)};
}
template <typename T>
DualT<T> exp(const DualT<T>& a) {
  T e = exp(a.v);
  return {e, a.d * e};
}
template <typename T>
DualT<T> log(const DualT<T>& a) { return {log(a.v), a.d / a.v}; }
template <typename T>
DualT<T> abs(const DualT<T>& a) {
  return value_of(a) < 0.0 ? DualT<T>{-a.v, -a.d} : a;
}
template <typename T>
DualT<T> pow(const DualT<T>& a, double n) {
  T p = pow(a.v, n);
  return {p, a.d * n * pow(a.v, n - 1.0)};
}

}  // namespace laptime

namespace Eigen {

template <typename T>
struct NumTraits<laptime::DualT<T>> : NumTraits<double> {
  using Real = laptime::DualT<T>;
  using NonInteger = laptime::DualT<T>;
  using Nested = laptime::DualT<T>;
  using Literal = double;
  enum {
    IsComplex = 0,
    IsInteger = 0,
    IsSigned = 1,
    RequireInitialization = 1,
    ReadCost = 1,
    AddCost = 3,
    MulCost = 3,
  };
};

template <typename T, typename BinaryOp>
struct ScalarBinaryOpTraits<laptime::DualT<T>, double, BinaryOp> {
  using ReturnType = laptime::DualT<T>;
};
template <typename T, typename BinaryOp>
struct ScalarBinaryOpTraits<double, laptime::DualT<T>, BinaryOp> {
  using ReturnType = laptime::DualT<T>;
};

}  // namespace Eigen

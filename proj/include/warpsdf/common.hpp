#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace warpsdf {

template <class Real> using Vec3 = Eigen::Matrix<Real, 3, 1>;
template <class Real> using Mat3 = Eigen::Matrix<Real, 3, 3>;
template <class Real> using Mat4 = Eigen::Matrix<Real, 4, 4>;
template <class Real>
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Real> using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

inline constexpr double kPi = 3.14159265358979323846;

using Vec3d = Vec3<double>;
using Mat3d = Mat3<double>;

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void format_into(std::ostringstream&) {}
template <class T, class... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  format_into(os, rest...);
}
}  // namespace detail

template <class... Args>
std::string strcat_msg(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::format_into(os, args...);
  return os.str();
}

template <class... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(strcat_msg(args...));
}

template <class... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

template <class Real>
Real clamp01(Real x) {
  return x < Real(0) ? Real(0) : (x > Real(1) ? Real(1) : x);
}

// Axis-aligned box; the canonical domain and the scene bounds both use it.
template <class Real>
struct Aabb {
  Vec3<Real> lo = Vec3<Real>::Zero();
  Vec3<Real> hi = Vec3<Real>::Zero();

  Vec3<Real> extent() const { return hi - lo; }
  Vec3<Real> center() const { return (lo + hi) / Real(2); }
  bool contains(const Vec3<Real>& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
  // Slab intersection; returns false when the ray misses. tmin/tmax are
  // clipped to [t0, t1].
  bool intersect(const Vec3<Real>& o, const Vec3<Real>& d, Real t0, Real t1,
                 Real& tmin, Real& tmax) const {
    tmin = t0;
    tmax = t1;
    for (int a = 0; a < 3; ++a) {
      Real inv = Real(1) / d[a];
      Real ta = (lo[a] - o[a]) * inv;
      Real tb = (hi[a] - o[a]) * inv;
      if (inv < Real(0)) std::swap(ta, tb);
      tmin = std::max(tmin, ta);
      tmax = std::min(tmax, tb);
      if (tmin > tmax) return false;
    }
    return true;
  }
};

// FNV-1a, used for checkpoint/content hashes (no crypto strength needed).
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return std::string(buf);
}

}  // namespace warpsdf

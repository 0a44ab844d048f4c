#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <functional>

namespace mpmflow {

struct Vec3 {
  double x = 0, y = 0, z = 0;

  double& operator[](int a) { return a == 0 ? x : (a == 1 ? y : z); }
  double operator[](int a) const { return a == 0 ? x : (a == 1 ? y : z); }

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3& operator+=(const Vec3& o) { x += o.x; y += o.y; z += o.z; return *this; }
  Vec3& operator-=(const Vec3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  Vec3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const { return std::sqrt(dot(*this)); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }

// Row-major 3x3, enough for APIC affine state and inertia tensors.
struct Mat3 {
  std::array<double, 9> m{};

  double& operator()(int r, int c) { return m[r * 3 + c]; }
  double operator()(int r, int c) const { return m[r * 3 + c]; }

  static Mat3 zero() { return {}; }
  static Mat3 identity() {
    Mat3 r;
    r(0, 0) = r(1, 1) = r(2, 2) = 1.0;
    return r;
  }
  static Mat3 outer(const Vec3& a, const Vec3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r(i, j) = a[i] * b[j];
    return r;
  }
  // Cross-product matrix: skew(w) * v == w x v.
  static Mat3 skew(const Vec3& w) {
    Mat3 r;
    r(0, 1) = -w.z; r(0, 2) = w.y;
    r(1, 0) = w.z;  r(1, 2) = -w.x;
    r(2, 0) = -w.y; r(2, 1) = w.x;
    return r;
  }

  Mat3 operator+(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] + o.m[i];
    return r;
  }
  Mat3 operator*(double s) const {
    Mat3 r;
    for (int i = 0; i < 9; ++i) r.m[i] = m[i] * s;
    return r;
  }
  Mat3& operator+=(const Mat3& o) {
    for (int i = 0; i < 9; ++i) m[i] += o.m[i];
    return *this;
  }
  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z,
            m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
};

// Integer cell/node coordinate, (i, j, k) = (depth, height, width).
struct Coord3 {
  std::int32_t i = 0, j = 0, k = 0;
  bool operator==(const Coord3&) const = default;
};

struct Coord3Hash {
  std::size_t operator()(const Coord3& c) const {
    // FNV-1a over the three packed ints; cheap and collision-free enough
    // for the coordinate maps we build per frame.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](std::uint64_t v) {
      h ^= v;
      h *= 1099511628211ull;
    };
    mix(static_cast<std::uint32_t>(c.i));
    mix(static_cast<std::uint32_t>(c.j));
    mix(static_cast<std::uint32_t>(c.k));
    return static_cast<std::size_t>(h);
  }
};

}  // namespace mpmflow

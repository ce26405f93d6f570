#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <vector>

#include "hemomesh/gauge.hpp"
#include "hemomesh/mesh.hpp"

namespace hemomesh::testutil {

inline TriangleMesh make_tetrahedron() {
  TriangleMesh m;
  m.positions = {{1, 1, 1}, {1, -1, -1}, {-1, 1, -1}, {-1, -1, 1}};
  m.triangles = {{0, 1, 2}, {0, 3, 1}, {0, 2, 3}, {1, 3, 2}};
  return m;
}

// Triangulated planar grid in z = 0, CCW seen from +z.
inline TriangleMesh make_grid(int nx, int ny, double spacing = 1.0) {
  TriangleMesh m;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      m.positions.emplace_back(i * spacing, j * spacing, 0.0);
  auto at = [&](int i, int j) { return j * nx + i; };
  for (int j = 0; j + 1 < ny; ++j)
    for (int i = 0; i + 1 < nx; ++i) {
      m.triangles.push_back({at(i, j), at(i + 1, j), at(i, j + 1)});
      m.triangles.push_back({at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)});
    }
  return m;
}

// Open cylinder tube along +x, inlet at x=0, outlet at x=length; rims tagged.
inline TriangleMesh make_tube(double radius, double length, int segments,
                              int rings, bool tag = true) {
  TriangleMesh m;
  for (int i = 0; i < rings; ++i) {
    const double x = length * i / (rings - 1);
    for (int j = 0; j < segments; ++j) {
      const double a = 2.0 * kPi * j / segments;
      m.positions.emplace_back(x, radius * std::cos(a), radius * std::sin(a));
    }
  }
  for (int i = 0; i + 1 < rings; ++i)
    for (int j = 0; j < segments; ++j) {
      const int a = i * segments + j;
      const int b = i * segments + (j + 1) % segments;
      const int c = (i + 1) * segments + j;
      const int d = (i + 1) * segments + (j + 1) % segments;
      m.triangles.push_back({a, c, b});
      m.triangles.push_back({b, c, d});
    }
  orient_consistently(m, Vec3(length / 2, 0, 0));
  if (tag) {
    for (const auto& loop : trace_boundary_loops(m)) {
      BoundaryLoop bl;
      bl.vertices = loop;
      double x = 0.0;
      for (int v : loop) x += m.positions[v].x();
      x /= static_cast<double>(loop.size());
      bl.tag = x < length / 2 ? LoopTag::inlet : LoopTag::outlet;
      m.boundary_loops.push_back(bl);
    }
  }
  return m;
}

inline TriangleMesh make_icosphere(int subdivisions, double radius = 1.0) {
  const double phi = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, phi, 0}, {1, phi, 0},   {-1, -phi, 0},
                         {1, -phi, 0}, {0, -1, phi},  {0, 1, phi},
                         {0, -1, -phi}, {0, 1, -phi}, {phi, 0, -1},
                         {phi, 0, 1},  {-phi, 0, -1}, {-phi, 0, 1}};
  for (auto& p : v) p.normalize();
  std::vector<std::array<int, 3>> f = {
      {0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
      {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
      {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
      {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      v.push_back(((v[a] + v[b]) * 0.5).normalized());
      mid[key] = static_cast<int>(v.size()) - 1;
      return mid[key];
    };
    std::vector<std::array<int, 3>> nf;
    for (const auto& t : f) {
      const int ab = midpoint(t[0], t[1]);
      const int bc = midpoint(t[1], t[2]);
      const int ca = midpoint(t[2], t[0]);
      nf.push_back({t[0], ab, ca});
      nf.push_back({t[1], bc, ab});
      nf.push_back({t[2], ca, bc});
      nf.push_back({ab, bc, ca});
    }
    f = std::move(nf);
  }
  TriangleMesh m;
  for (auto& p : v) m.positions.push_back(p * radius);
  m.triangles = f;
  return m;
}

// Open cone fan: apex + ring; apex angle deficit is combinatorial.
inline TriangleMesh make_cone(int k, double half_angle, double slant = 2.0) {
  TriangleMesh m;
  const double r = slant * std::sin(half_angle);
  const double h = slant * std::cos(half_angle);
  m.positions.emplace_back(0, 0, h);
  for (int i = 0; i < k; ++i) {
    const double a = 2.0 * kPi * i / k;
    m.positions.emplace_back(r * std::cos(a), r * std::sin(a), 0.0);
  }
  for (int i = 0; i < k; ++i)
    m.triangles.push_back({0, 1 + i, 1 + (i + 1) % k});
  return m;
}

inline double apex_deficit(const TriangleMesh& cone, int apex = 0) {
  double sum = 0.0;
  for (const auto& t : cone.triangles) {
    int k = -1;
    for (int c = 0; c < 3; ++c)
      if (t[c] == apex) k = c;
    if (k < 0) continue;
    const Vec3 u =
        (cone.positions[t[(k + 1) % 3]] - cone.positions[apex]).normalized();
    const Vec3 v =
        (cone.positions[t[(k + 2) % 3]] - cone.positions[apex]).normalized();
    sum += std::acos(std::clamp(u.dot(v), -1.0, 1.0));
  }
  return 2.0 * kPi - sum;
}

// Central-difference gradient of a scalar function of a flat vector.
inline std::vector<double> numeric_gradient(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + h;
    const double fp = f(x);
    x[i] = x0 - h;
    const double fm = f(x);
    x[i] = x0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Relative error with an absolute floor, as used by the gradient checks.
inline double rel_err(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace hemomesh::testutil

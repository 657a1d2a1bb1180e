#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "warpsdf/common.hpp"
#include "warpsdf/mc_tables.hpp"

namespace warpsdf {

struct Mesh {
  std::vector<Vec3d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3d> normals;  // optional, per vertex

  bool empty() const { return triangles.empty(); }

  void validate() const {
    for (const auto& t : triangles)
      for (int i : t)
        require(i >= 0 && i < int(vertices.size()), "mesh: triangle index out of range");
  }
};

// Writes an ASCII Wavefront OBJ; header comment lines carry provenance.
inline void write_obj(const Mesh& m, const std::string& path,
                      const std::vector<std::string>& header_comments = {}) {
  std::ofstream f(path);
  require(f.good(), "write_obj: cannot open ", path);
  f.precision(9);
  for (const auto& c : header_comments) f << "# " << c << "\n";
  for (const auto& v : m.vertices) f << "v " << v[0] << " " << v[1] << " " << v[2] << "\n";
  for (const auto& n : m.normals) f << "vn " << n[0] << " " << n[1] << " " << n[2] << "\n";
  bool has_n = m.normals.size() == m.vertices.size();
  for (const auto& t : m.triangles) {
    if (has_n)
      f << "f " << t[0] + 1 << "//" << t[0] + 1 << " " << t[1] + 1 << "//" << t[1] + 1
        << " " << t[2] + 1 << "//" << t[2] + 1 << "\n";
    else
      f << "f " << t[0] + 1 << " " << t[1] + 1 << " " << t[2] + 1 << "\n";
  }
  require(f.good(), "write_obj: write failed for ", path);
}

namespace mc {

// cube corner offsets in Bourke numbering
inline constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                                      {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
// the two corners of each of the 12 edges
inline constexpr int kEdgeCorner[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0},
                                           {4, 5}, {5, 6}, {6, 7}, {7, 4},
                                           {0, 4}, {1, 5}, {2, 6}, {3, 7}};

inline int cube_index(const double corner_phi[8], double iso = 0.0) {
  int idx = 0;
  for (int c = 0; c < 8; ++c)
    if (corner_phi[c] < iso) idx |= 1 << c;
  return idx;
}

}  // namespace mc

// Lattice-based isosurface extraction at phi = 0. `values` holds res^3 node
// samples indexed ((i*res)+j)*res+k over the box; vertices interpolate the
// zero crossing along cell edges and are welded across cells; triangles are
// oriented with normals toward positive phi.
inline Mesh marching_cubes(const std::vector<double>& values, const Aabb<double>& box,
                           int res) {
  require(res >= 2, "marching_cubes: need at least 2 nodes per axis");
  require(values.size() == std::size_t(res) * res * res, "marching_cubes: value count");
  Mesh mesh;
  auto node_id = [res](int i, int j, int k) {
    return (std::int64_t(i) * res + j) * res + k;
  };
  Vec3d h = box.extent() / double(res - 1);
  auto node_pos = [&](int i, int j, int k) {
    return Vec3d(box.lo[0] + i * h[0], box.lo[1] + j * h[1], box.lo[2] + k * h[2]);
  };

  // welded vertex per (lattice node, axis) edge
  std::unordered_map<std::int64_t, int> edge_vertex;
  auto vertex_on_edge = [&](int i0, int j0, int k0, int axis, double phi_a,
                            double phi_b) {
    std::int64_t key = node_id(i0, j0, k0) * 3 + axis;
    auto it = edge_vertex.find(key);
    if (it != edge_vertex.end()) return it->second;
    Vec3d a = node_pos(i0, j0, k0);
    Vec3d b = a;
    b[axis] += h[axis];
    double t = phi_a / (phi_a - phi_b);  // zero crossing (phi_a, phi_b differ in sign)
    t = clamp01(t);
    int id = int(mesh.vertices.size());
    mesh.vertices.push_back(a + t * (b - a));
    edge_vertex.emplace(key, id);
    return id;
  };

  double phi[8];
  for (int i = 0; i + 1 < res; ++i)
    for (int j = 0; j + 1 < res; ++j)
      for (int k = 0; k + 1 < res; ++k) {
        for (int c = 0; c < 8; ++c)
          phi[c] = values[std::size_t(node_id(i + mc::kCorner[c][0], j + mc::kCorner[c][1],
                                              k + mc::kCorner[c][2]))];
        int ci = mc::cube_index(phi);
        if (mc::kEdgeTable[ci] == 0) continue;
        int ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc::kEdgeTable[ci] & (1 << e))) continue;
          int ca = mc::kEdgeCorner[e][0], cb = mc::kEdgeCorner[e][1];
          int ai = i + mc::kCorner[ca][0], aj = j + mc::kCorner[ca][1],
              ak = k + mc::kCorner[ca][2];
          int bi = i + mc::kCorner[cb][0], bj = j + mc::kCorner[cb][1],
              bk = k + mc::kCorner[cb][2];
          int axis = (ai != bi) ? 0 : (aj != bj ? 1 : 2);
          // canonical edge anchor = the lower lattice node
          bool fwd = (ai < bi) || (aj < bj) || (ak < bk);
          int oi = fwd ? ai : bi, oj = fwd ? aj : bj, ok = fwd ? ak : bk;
          double pa = fwd ? phi[ca] : phi[cb];
          double pb = fwd ? phi[cb] : phi[ca];
          ev[e] = vertex_on_edge(oi, oj, ok, axis, pa, pb);
        }
        for (int t = 0; mc::kTriTable[ci][t] != -1; t += 3) {
          // the table winds toward the negative side; swap for outward (+phi)
          std::array<int, 3> tri = {ev[mc::kTriTable[ci][t]], ev[mc::kTriTable[ci][t + 2]],
                                    ev[mc::kTriTable[ci][t + 1]]};
          if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) continue;
          Vec3d e1 = mesh.vertices[std::size_t(tri[1])] - mesh.vertices[std::size_t(tri[0])];
          Vec3d e2 = mesh.vertices[std::size_t(tri[2])] - mesh.vertices[std::size_t(tri[0])];
          if (e1.cross(e2).norm() < 1e-12) continue;  // degenerate sliver
          mesh.triangles.push_back(tri);
        }
      }
  mesh.validate();
  return mesh;
}

// Unsigned distance from a point to a triangle (Ericson's region method).
inline double point_triangle_distance(const Vec3d& p, const Vec3d& a, const Vec3d& b,
                                      const Vec3d& c) {
  Vec3d ab = b - a, ac = c - a, ap = p - a;
  double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return (p - a).norm();
  Vec3d bp = p - b;
  double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return (p - b).norm();
  double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) {
    double v = d1 / (d1 - d3);
    return (p - (a + v * ab)).norm();
  }
  Vec3d cp = p - c;
  double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return (p - c).norm();
  double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) {
    double w = d2 / (d2 - d6);
    return (p - (a + w * ac)).norm();
  }
  double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return (p - (b + w * (c - b))).norm();
  }
  double denom = 1.0 / (va + vb + vc);
  double v = vb * denom, w = vc * denom;
  return (p - (a + v * ab + w * ac)).norm();
}

inline double point_mesh_distance(const Vec3d& p, const Mesh& m) {
  double best = std::numeric_limits<double>::max();
  for (const auto& t : m.triangles)
    best = std::min(best, point_triangle_distance(p, m.vertices[std::size_t(t[0])],
                                                  m.vertices[std::size_t(t[1])],
                                                  m.vertices[std::size_t(t[2])]));
  return best;
}

}  // namespace warpsdf

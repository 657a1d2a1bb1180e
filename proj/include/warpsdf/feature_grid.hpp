#pragma once

#include <cmath>
#include <vector>

#include "warpsdf/dual3.hpp"
#include "warpsdf/params.hpp"
#include "warpsdf/quaternion.hpp"
#include "warpsdf/tape.hpp"

namespace warpsdf {

// Scalar-generic trilinear interpolation over a grid block. Queries outside
// the lattice are clamped to the boundary cell (their spatial derivative is
// zero there) and reported through the oob flag. Exact at lattice nodes.
template <class S, class Real>
void grid_trilerp(const ParamStore<Real>& store, const GridGeom<Real>& g, int c_begin,
                  int c_count, const SVec3<S>& x, S* out, bool* oob = nullptr) {
  const Real* G = store.block(g.block).v.data();
  const int N = g.res, C = g.channels;
  S f[3];
  std::int64_t cell[3];
  bool outside = false;
  for (int m = 0; m < 3; ++m) {
    S u = (x[m] - g.origin[m]) * (Real(1) / g.spacing);
    Real uv = value_of(u);
    if (uv < Real(0)) {
      u = S(Real(0));
      outside = true;
    } else if (uv > Real(N - 1)) {
      u = S(Real(N - 1));
      outside = true;
    }
    std::int64_t ci = std::int64_t(std::floor(double(value_of(u))));
    if (ci > N - 2) ci = N - 2;
    cell[m] = ci;
    f[m] = u - Real(ci);
  }
  if (oob) *oob = outside;
  for (int j = 0; j < c_count; ++j) out[j] = S(Real(0));
  for (int d = 0; d < 8; ++d) {
    int dx = d & 1, dy = (d >> 1) & 1, dz = (d >> 2) & 1;
    S wx = dx ? f[0] : Real(1) - f[0];
    S wy = dy ? f[1] : Real(1) - f[1];
    S wz = dz ? f[2] : Real(1) - f[2];
    S w = wx * wy * wz;
    const Real* gc =
        G + (((cell[0] + dx) * N + (cell[1] + dy)) * N + (cell[2] + dz)) * C + c_begin;
    for (int j = 0; j < c_count; ++j) out[j] = out[j] + w * gc[j];
  }
}

// Doubles the node count per axis by lattice subdivision: spacing halves, the
// origin stays, new nodes take the trilinear value of the old grid at their
// positions. Even-index nodes coincide with old nodes and are preserved
// exactly; the far extent grows by half an old cell (boundary-extended), so
// the interpolated field on the original domain is bit-reproduced up to
// rounding.
template <class Real>
std::vector<Real> upsample_values(const std::vector<Real>& old, int N, int C) {
  int N2 = 2 * N;
  std::vector<Real> out(std::size_t(N2) * N2 * N2 * C);
  auto old_at = [&](std::int64_t i, std::int64_t j, std::int64_t k, int c) {
    i = std::min<std::int64_t>(i, N - 1);
    j = std::min<std::int64_t>(j, N - 1);
    k = std::min<std::int64_t>(k, N - 1);
    return old[std::size_t(((i * N + j) * N + k) * C + c)];
  };
  for (std::int64_t i = 0; i < N2; ++i)
    for (std::int64_t j = 0; j < N2; ++j)
      for (std::int64_t k = 0; k < N2; ++k) {
        Real* dst = &out[std::size_t(((i * N2 + j) * N2 + k) * C)];
        std::int64_t i0 = i / 2, j0 = j / 2, k0 = k / 2;
        bool ei = (i % 2) == 0, ej = (j % 2) == 0, ek = (k % 2) == 0;
        for (int c = 0; c < C; ++c) {
          Real acc = 0;
          for (int d = 0; d < 8; ++d) {
            int dx = d & 1, dy = (d >> 1) & 1, dz = (d >> 2) & 1;
            if ((ei && dx) || (ej && dy) || (ek && dz)) continue;
            Real w = (ei ? Real(1) : Real(0.5)) * (ej ? Real(1) : Real(0.5)) *
                     (ek ? Real(1) : Real(0.5));
            acc += w * old_at(i0 + dx, j0 + dy, k0 + dz, c);
          }
          dst[c] = acc;
        }
      }
  return out;
}

// Upsamples a grid block in place (values plus any rider arrays such as Adam
// moments) and returns the refined geometry.
template <class Real>
GridGeom<Real> upsample_grid(ParamStore<Real>& store, const GridGeom<Real>& g,
                             int max_res, std::vector<std::vector<Real>*> riders = {}) {
  require(2 * g.res <= max_res, "upsample_grid: resolution ", 2 * g.res,
          " exceeds configured maximum ", max_res);
  auto& blk = store.block(g.block);
  int C = g.channels;
  std::vector<Real> nv = upsample_values(blk.v, g.res, C);
  for (auto* r : riders) {
    require(r->size() == blk.v.size(), "upsample_grid: rider size mismatch");
    *r = upsample_values(*r, g.res, C);
  }
  int N2 = 2 * g.res;
  store.reshape(g.block, {N2, N2, N2, C}, std::move(nv));
  GridGeom<Real> g2 = g;
  g2.res = N2;
  g2.spacing = g.spacing / Real(2);
  return g2;
}

}  // namespace warpsdf

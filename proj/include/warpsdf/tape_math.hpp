#pragma once

#include "warpsdf/tape.hpp"

namespace warpsdf {

// A batch quantity with forward-mode spatial tangents: value lane plus three
// tangent lanes (derivatives w.r.t. the seed point's axes). Tangent
// arithmetic is composed from first-order tape ops, so reverse-mode through a
// tangent expression needs no dedicated second-order kernels.
template <class Real>
struct TanBatch {
  Tape<Real>* tape = nullptr;
  BatchVar v;
  BatchVar t[3];
  bool has_t = false;

  static TanBatch plain(Tape<Real>& tp, BatchVar v) { return {&tp, v, {}, false}; }
  static TanBatch with(Tape<Real>& tp, BatchVar v, BatchVar t0, BatchVar t1, BatchVar t2) {
    return {&tp, v, {t0, t1, t2}, true};
  }
};

template <class Real>
TanBatch<Real> tb_add(const TanBatch<Real>& a, const TanBatch<Real>& b) {
  Tape<Real>& tp = *a.tape;
  TanBatch<Real> r;
  r.tape = &tp;
  r.v = tp.ew2(OpK::Add, a.v, b.v);
  r.has_t = a.has_t || b.has_t;
  if (r.has_t)
    for (int k = 0; k < 3; ++k) {
      if (a.has_t && b.has_t)
        r.t[k] = tp.ew2(OpK::Add, a.t[k], b.t[k]);
      else
        r.t[k] = a.has_t ? a.t[k] : b.t[k];
    }
  return r;
}

template <class Real>
TanBatch<Real> tb_sub(const TanBatch<Real>& a, const TanBatch<Real>& b) {
  Tape<Real>& tp = *a.tape;
  TanBatch<Real> r;
  r.tape = &tp;
  r.v = tp.ew2(OpK::Sub, a.v, b.v);
  r.has_t = a.has_t || b.has_t;
  if (r.has_t)
    for (int k = 0; k < 3; ++k) {
      if (a.has_t && b.has_t)
        r.t[k] = tp.ew2(OpK::Sub, a.t[k], b.t[k]);
      else if (a.has_t)
        r.t[k] = a.t[k];
      else
        r.t[k] = tp.ew1(OpK::Neg, b.t[k]);
    }
  return r;
}

template <class Real>
TanBatch<Real> tb_mul(const TanBatch<Real>& a, const TanBatch<Real>& b) {
  Tape<Real>& tp = *a.tape;
  TanBatch<Real> r;
  r.tape = &tp;
  r.v = tp.ew2(OpK::Mul, a.v, b.v);
  r.has_t = a.has_t || b.has_t;
  if (r.has_t)
    for (int k = 0; k < 3; ++k) {
      BatchVar term1{}, term2{};
      bool h1 = b.has_t, h2 = a.has_t;
      if (h1) term1 = tp.ew2(OpK::Mul, a.v, b.t[k]);
      if (h2) term2 = tp.ew2(OpK::Mul, b.v, a.t[k]);
      r.t[k] = h1 && h2 ? tp.ew2(OpK::Add, term1, term2) : (h1 ? term1 : term2);
    }
  return r;
}

template <class Real>
TanBatch<Real> tb_scale(const TanBatch<Real>& a, double c) {
  Tape<Real>& tp = *a.tape;
  TanBatch<Real> r;
  r.tape = &tp;
  r.v = tp.ew1(OpK::Scale, a.v, c);
  r.has_t = a.has_t;
  if (r.has_t)
    for (int k = 0; k < 3; ++k) r.t[k] = tp.ew1(OpK::Scale, a.t[k], c);
  return r;
}

// y = f(x) with derivative op df: yt_k = f'(x) * xt_k.
template <class Real>
TanBatch<Real> tb_unary(const TanBatch<Real>& a, OpK f, OpK df) {
  Tape<Real>& tp = *a.tape;
  TanBatch<Real> r;
  r.tape = &tp;
  r.v = tp.ew1(f, a.v);
  r.has_t = a.has_t;
  if (r.has_t) {
    BatchVar d = tp.ew1(df, a.v);
    for (int k = 0; k < 3; ++k) r.t[k] = tp.ew2(OpK::Mul, d, a.t[k]);
  }
  return r;
}

// Batched 3-vectors with tangents; components live in separate lanes.
template <class Real>
struct TanVec3 {
  TanBatch<Real> c[3];

  TanBatch<Real>& operator[](int i) { return c[i]; }
  const TanBatch<Real>& operator[](int i) const { return c[i]; }
};

template <class Real>
TanVec3<Real> tv_add(const TanVec3<Real>& a, const TanVec3<Real>& b) {
  return {tb_add(a[0], b[0]), tb_add(a[1], b[1]), tb_add(a[2], b[2])};
}
template <class Real>
TanVec3<Real> tv_sub(const TanVec3<Real>& a, const TanVec3<Real>& b) {
  return {tb_sub(a[0], b[0]), tb_sub(a[1], b[1]), tb_sub(a[2], b[2])};
}
template <class Real>
TanBatch<Real> tv_dot(const TanVec3<Real>& a, const TanVec3<Real>& b) {
  return tb_add(tb_add(tb_mul(a[0], b[0]), tb_mul(a[1], b[1])), tb_mul(a[2], b[2]));
}

// Unit quaternion exp of the pure quaternion (0, r), batched with tangents.
// Parameterized through s = |r|^2 so every lane is smooth at r = 0.
template <class Real>
struct TanQuat {
  TanBatch<Real> w;
  TanVec3<Real> xyz;
};

template <class Real>
TanQuat<Real> tq_exp(const TanVec3<Real>& r) {
  Tape<Real>& tp = *r[0].tape;
  TanBatch<Real> s = tv_dot(r, r);
  TanQuat<Real> q;
  // cos(sqrt(s)) has derivative -sinc(sqrt(s))/2 in s.
  q.w.tape = &tp;
  q.w.v = tp.ew1(OpK::CosSq, s.v);
  q.w.has_t = s.has_t;
  if (s.has_t) {
    BatchVar d = tp.ew1(OpK::SincSq, s.v);
    BatchVar dneg = tp.ew1(OpK::Scale, d, -0.5);
    for (int k = 0; k < 3; ++k) q.w.t[k] = tp.ew2(OpK::Mul, dneg, s.t[k]);
  }
  TanBatch<Real> sc = tb_unary(s, OpK::SincSq, OpK::SincSqD);
  for (int m = 0; m < 3; ++m) q.xyz.c[m] = tb_mul(r[m], sc);
  return q;
}

// Rotation of v by the unit quaternion q (sandwich as an explicit matrix
// application): R v with
//   R = I + 2w [q]_x + 2 [q]_x^2, written out per component.
template <class Real>
TanVec3<Real> tq_rotate(const TanQuat<Real>& q, const TanVec3<Real>& v) {
  // t = 2 q x v;  out = v + w t + q x t
  auto cross = [](const TanVec3<Real>& a, const TanVec3<Real>& b) {
    TanVec3<Real> c;
    c.c[0] = tb_sub(tb_mul(a[1], b[2]), tb_mul(a[2], b[1]));
    c.c[1] = tb_sub(tb_mul(a[2], b[0]), tb_mul(a[0], b[2]));
    c.c[2] = tb_sub(tb_mul(a[0], b[1]), tb_mul(a[1], b[0]));
    return c;
  };
  TanVec3<Real> t = cross(q.xyz, v);
  for (int m = 0; m < 3; ++m) t.c[m] = tb_scale(t.c[m], 2.0);
  TanVec3<Real> wt;
  for (int m = 0; m < 3; ++m) wt.c[m] = tb_mul(q.w, t.c[m]);
  TanVec3<Real> qt = cross(q.xyz, t);
  return tv_add(tv_add(v, wt), qt);
}

}  // namespace warpsdf

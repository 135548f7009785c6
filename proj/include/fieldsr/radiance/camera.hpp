// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cmath>

#include "fieldsr/core/errors.hpp"

namespace fieldsr {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3() = default;
  Vec3(double xx, double yy, double zz) : x(xx), y(yy), z(zz) {}

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  Vec3 operator/(double s) const { return {x / s, y / s, z / s}; }
  Vec3& operator+=(const Vec3& o) {
    x += o.x;
    y += o.y;
    z += o.z;
    return *this;
  }
  double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  double& operator[](int i) { return i == 0 ? x : (i == 1 ? y : z); }
};

inline Vec3 operator*(double s, const Vec3& v) { return v * s; }
inline double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }
inline Vec3 normalized(const Vec3& v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw NumericError("normalized: zero-length vector");
  return v / n;
}

// row-major 3x3
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return {}; }
  static Mat3 from_columns(const Vec3& c0, const Vec3& c1, const Vec3& c2) {
    Mat3 r;
    r.m = {c0.x, c1.x, c2.x, c0.y, c1.y, c2.y, c0.z, c1.z, c2.z};
    return r;
  }

  double at(int r, int c) const { return m[static_cast<size_t>(3 * r + c)]; }
  double& at(int r, int c) { return m[static_cast<size_t>(3 * r + c)]; }

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
        r.at(i, j) = s;
      }
    return r;
  }
  Mat3 transposed() const {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) r.at(i, j) = at(j, i);
    return r;
  }

  // max |R^T R - I|
  double orthonormality_error() const {
    const Mat3 g = transposed() * (*this);
    double e = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) e = std::max(e, std::abs(g.at(i, j) - (i == j ? 1.0 : 0.0)));
    return e;
  }
};

struct Ray {
  Vec3 origin;
  Vec3 dir;  // unit length
};

// Pinhole camera. Camera frame: x right, y down, z forward (optical axis).
// Pose is world-from-camera: p_world = R * p_cam + t, so t is the camera
// center and the columns of R are the camera axes in world coordinates.
// Pixel (ix, iy) covers [ix, ix+1) x [iy, iy+1); its center is (ix+.5, iy+.5).
struct Camera {
  double focal = 1.0;  // pixels, shared by both axes
  double cx = 0.0, cy = 0.0;
  int width = 0, height = 0;
  Mat3 R;
  Vec3 t;
  double near = 0.1, far = 4.0;

  void validate() const {
    if (!(focal > 0.0)) throw ParameterError("Camera: focal must be positive");
    if (width <= 0 || height <= 0) throw ParameterError("Camera: non-positive image size");
    if (!(near > 0.0) || !(near < far)) throw ParameterError("Camera: need 0 < near < far");
    if (R.orthonormality_error() > 1e-9)
      throw ParameterError("Camera: rotation is not orthonormal");
  }

  // ray through continuous pixel coordinates (u, v)
  Ray pixel_ray(double u, double v) const {
    const Vec3 d_cam{(u - cx) / focal, (v - cy) / focal, 1.0};
    return {t, normalized(R * d_cam)};
  }

  struct Projection {
    double u = 0.0, v = 0.0;  // continuous pixel coordinates
    double dist = 0.0;        // euclidean distance from the camera center
    bool in_front = false;
  };

  Projection project(const Vec3& p) const {
    const Vec3 pc = R.transposed() * (p - t);
    Projection pr;
    pr.dist = norm(p - t);
    if (pc.z <= 0.0) return pr;
    pr.u = focal * pc.x / pc.z + cx;
    pr.v = focal * pc.y / pc.z + cy;
    pr.in_front = true;
    return pr;
  }
};

// world-from-camera rotation looking from eye toward center, with image-up
// aligned to the up hint; throws if the view direction is parallel to up
inline Mat3 look_at_rotation(const Vec3& eye, const Vec3& center, const Vec3& up) {
  const Vec3 fwd = normalized(center - eye);
  Vec3 u = up - dot(up, fwd) * fwd;
  if (norm(u) < 1e-12) throw ParameterError("look_at: view direction parallel to up");
  u = normalized(u);
  const Vec3 y_cam = -1.0 * u;  // image y points down
  const Vec3 x_cam = cross(y_cam, fwd);
  return Mat3::from_columns(x_cam, y_cam, fwd);
}

inline Camera make_look_at_camera(const Vec3& eye, const Vec3& center, const Vec3& up,
                                  double focal, int width, int height, double near = 0.1,
                                  double far = 4.0) {
  Camera c;
  c.focal = focal;
  c.width = width;
  c.height = height;
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  c.R = look_at_rotation(eye, center, up);
  c.t = eye;
  c.near = near;
  c.far = far;
  c.validate();
  return c;
}

// same pose and field of view at k-times the pixel resolution
inline Camera scale_camera(const Camera& cam, int k) {
  if (k < 1) throw ParameterError("scale_camera: factor must be >= 1");
  Camera c = cam;
  c.focal *= k;
  c.cx *= k;
  c.cy *= k;
  c.width *= k;
  c.height *= k;
  return c;
}

}  // namespace fieldsr

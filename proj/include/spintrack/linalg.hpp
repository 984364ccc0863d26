#pragma once

#include <array>
#include <cmath>
#include <stdexcept>

namespace spintrack {

struct Vec2 {
    double y = 0.0;
    double z = 0.0;
};

inline Vec2 operator+(Vec2 a, Vec2 b) { return {a.y + b.y, a.z + b.z}; }
inline Vec2 operator-(Vec2 a, Vec2 b) { return {a.y - b.y, a.z - b.z}; }
inline Vec2 operator*(double s, Vec2 v) { return {s * v.y, s * v.z}; }
inline double dot(Vec2 a, Vec2 b) { return a.y * b.y + a.z * b.z; }
inline double norm(Vec2 v) { return std::hypot(v.y, v.z); }

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
};

inline Vec3 operator*(double s, Vec3 v) { return {s * v.x, s * v.y, s * v.z}; }
inline double norm(const Vec3& v) { return std::sqrt(v.x * v.x + v.y * v.y + v.z * v.z); }

/// Symmetric 2x2 matrix in (Fy, Fz) coordinates.
struct Mat2 {
    double yy = 0.0;
    double yz = 0.0;
    double zz = 0.0;

    double trace() const { return yy + zz; }
    double det() const { return yy * zz - yz * yz; }
};

inline Mat2 operator+(Mat2 a, Mat2 b) { return {a.yy + b.yy, a.yz + b.yz, a.zz + b.zz}; }
inline Mat2 operator-(Mat2 a, Mat2 b) { return {a.yy - b.yy, a.yz - b.yz, a.zz - b.zz}; }
inline Mat2 operator*(double s, Mat2 m) { return {s * m.yy, s * m.yz, s * m.zz}; }

inline double quad_form(const Mat2& m, Vec2 v) {
    return v.y * v.y * m.yy + 2.0 * v.y * v.z * m.yz + v.z * v.z * m.zz;
}

inline bool psd2(const Mat2& m, double eps = 0.0) {
    return m.yy >= -eps && m.zz >= -eps && m.det() >= -eps * (1.0 + m.trace() * m.trace());
}

/// General 2x2, used for regression gains.
struct Gain2 {
    double a[2][2] = {{0, 0}, {0, 0}};
};

inline Vec2 apply(const Gain2& g, Vec2 v) {
    return {g.a[0][0] * v.y + g.a[0][1] * v.z, g.a[1][0] * v.y + g.a[1][1] * v.z};
}

/// Dense symmetric 3x3 stored fully.
struct Mat3 {
    double m[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};

    static Mat3 diag(double a, double b, double c) {
        Mat3 r;
        r.m[0][0] = a;
        r.m[1][1] = b;
        r.m[2][2] = c;
        return r;
    }
    static Mat3 identity() { return diag(1.0, 1.0, 1.0); }

    double trace() const { return m[0][0] + m[1][1] + m[2][2]; }

    Mat3 transposed() const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                r.m[i][j] = m[j][i];
        return r;
    }
};

inline Mat3 operator*(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) {
            double s = 0.0;
            for (int k = 0; k < 3; ++k)
                s += a.m[i][k] * b.m[k][j];
            r.m[i][j] = s;
        }
    return r;
}

inline Mat3 operator+(const Mat3& a, const Mat3& b) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.m[i][j] = a.m[i][j] + b.m[i][j];
    return r;
}

inline Mat3 operator*(double s, const Mat3& a) {
    Mat3 r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            r.m[i][j] = s * a.m[i][j];
    return r;
}

inline Vec3 operator*(const Mat3& a, const Vec3& v) {
    return {a.m[0][0] * v.x + a.m[0][1] * v.y + a.m[0][2] * v.z,
            a.m[1][0] * v.x + a.m[1][1] * v.y + a.m[1][2] * v.z,
            a.m[2][0] * v.x + a.m[2][1] * v.y + a.m[2][2] * v.z};
}

inline void symmetrize(Mat3& a) {
    for (int i = 0; i < 3; ++i)
        for (int j = i + 1; j < 3; ++j) {
            double v = 0.5 * (a.m[i][j] + a.m[j][i]);
            a.m[i][j] = a.m[j][i] = v;
        }
}

/// Eigenvalues of a symmetric 3x3 by cyclic Jacobi sweeps, ascending order.
inline std::array<double, 3> eig3_sym(Mat3 a) {
    symmetrize(a);
    for (int sweep = 0; sweep < 32; ++sweep) {
        double off = std::abs(a.m[0][1]) + std::abs(a.m[0][2]) + std::abs(a.m[1][2]);
        if (off < 1e-14 * (1.0 + std::abs(a.trace())))
            break;
        for (int p = 0; p < 2; ++p)
            for (int q = p + 1; q < 3; ++q) {
                if (a.m[p][q] == 0.0)
                    continue;
                double theta = (a.m[q][q] - a.m[p][p]) / (2.0 * a.m[p][q]);
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < 3; ++k) {
                    double akp = a.m[k][p], akq = a.m[k][q];
                    a.m[k][p] = c * akp - s * akq;
                    a.m[k][q] = s * akp + c * akq;
                }
                for (int k = 0; k < 3; ++k) {
                    double apk = a.m[p][k], aqk = a.m[q][k];
                    a.m[p][k] = c * apk - s * aqk;
                    a.m[q][k] = s * apk + c * aqk;
                }
            }
    }
    std::array<double, 3> ev{a.m[0][0], a.m[1][1], a.m[2][2]};
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    if (ev[1] > ev[2]) std::swap(ev[1], ev[2]);
    if (ev[0] > ev[1]) std::swap(ev[0], ev[1]);
    return ev;
}

}  // namespace spintrack

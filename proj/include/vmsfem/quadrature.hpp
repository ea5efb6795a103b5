#pragma once

#include <array>
#include <vector>

namespace vmsfem {

/// Quadrature rule on the reference triangle {(0,0), (1,0), (0,1)}.
/// Points are stored in barycentric coordinates (l0, l1, l2) with
/// l1 = xi, l2 = eta; weights sum to the reference area 1/2.
struct Quadrature {
    int degree = 0;
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;

    int size() const noexcept { return static_cast<int>(weights.size()); }
};

/// Gauss-Legendre nodes and weights on [0, 1].
inline std::vector<std::array<double, 2>> gauss_legendre_01(int n) {
    // Nodes/weights on [-1, 1] for n = 1..5.
    static const double x1[] = {0.0};
    static const double w1[] = {2.0};
    static const double x2[] = {-0.57735026918962576451, 0.57735026918962576451};
    static const double w2[] = {1.0, 1.0};
    static const double x3[] = {-0.77459666924148337704, 0.0, 0.77459666924148337704};
    static const double w3[] = {0.55555555555555555556, 0.88888888888888888889, 0.55555555555555555556};
    static const double x4[] = {-0.86113631159405257522, -0.33998104358485626480, 0.33998104358485626480,
                                0.86113631159405257522};
    static const double w4[] = {0.34785484513745385737, 0.65214515486254614263, 0.65214515486254614263,
                                0.34785484513745385737};
    static const double x5[] = {-0.90617984593866399280, -0.53846931010568309104, 0.0,
                                0.53846931010568309104, 0.90617984593866399280};
    static const double w5[] = {0.23692688505618908751, 0.47862867049936646804, 0.56888888888888888889,
                                0.47862867049936646804, 0.23692688505618908751};
    const double* xs = nullptr;
    const double* ws = nullptr;
    switch (n) {
    case 1: xs = x1; ws = w1; break;
    case 2: xs = x2; ws = w2; break;
    case 3: xs = x3; ws = w3; break;
    case 4: xs = x4; ws = w4; break;
    default: n = 5; xs = x5; ws = w5; break;
    }
    std::vector<std::array<double, 2>> rule(n);
    for (int i = 0; i < n; ++i) rule[i] = {0.5 * (xs[i] + 1.0), 0.5 * ws[i]};
    return rule;
}

/// Collapsed (conical product) Gauss rule: xi = u, eta = v (1 - u), with
/// Jacobian (1 - u). n points per direction integrate total degree 2n - 2
/// exactly.
inline Quadrature conical_product_rule(int n) {
    Quadrature q;
    q.degree = 2 * n - 2;
    const auto gl = gauss_legendre_01(n);
    for (const auto& [u, wu] : gl) {
        for (const auto& [v, wv] : gl) {
            const double xi = u;
            const double eta = v * (1.0 - u);
            q.points.push_back({1.0 - xi - eta, xi, eta});
            q.weights.push_back(wu * wv * (1.0 - u));
        }
    }
    return q;
}

/// Rule used for every bilinear and stabilization form (exact to degree 6).
inline const Quadrature& default_quadrature() {
    static const Quadrature q = conical_product_rule(4);
    return q;
}

} // namespace vmsfem

// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <catch2/catch_amalgamated.hpp>
#include <cmath>
#include <functional>
#include <vector>

#include "semanti/rng.hpp"
#include "semanti/tensor.hpp"

namespace fd {

using DT = semanti::TensorT<double>;
using DTape = semanti::Tape<double>;

inline DT random_dt(semanti::Shape s, std::uint64_t seed, double spread = 1.0) {
    semanti::RandomStream rs(seed);
    std::vector<double> v(semanti::shape_size(s));
    for (auto& x : v) x = rs.next_range(-spread, spread);
    return DT(std::move(s), std::move(v));
}

inline DT clone(const DT& t) { return DT(t.shape, t.values()); }

/// Central finite differences against the analytic gradients of `build`.
/// `build` receives the tape and one tensor per entry of `inits` and must
/// return a scalar; leaves are registered by this harness.
inline void check_grads(const std::function<DT(DTape&, std::vector<DT>&)>& build,
                        std::vector<DT> inits, double h = 1e-4, double tol = 1e-4) {
    DTape tape;
    std::vector<DT> leaves;
    for (const DT& t : inits) leaves.push_back(tape.leaf(t));
    DT loss = build(tape, leaves);
    tape.backward(loss);
    std::vector<std::vector<double>> analytic;
    for (const DT& l : leaves) analytic.push_back(tape.grad(l));

    double worst = 0.0;
    for (std::size_t i = 0; i < inits.size(); ++i) {
        for (std::size_t j = 0; j < inits[i].size(); ++j) {
            double f[2];
            for (int s = 0; s < 2; ++s) {
                std::vector<DT> shifted;
                for (const DT& t : inits) shifted.push_back(clone(t));
                shifted[i].values_mut()[j] += (s == 0 ? h : -h);
                DTape t2;
                f[s] = build(t2, shifted).scalar();
            }
            const double numeric = (f[0] - f[1]) / (2 * h);
            const double a = analytic[i][j];
            const double rel =
                std::abs(a - numeric) / std::max({1e-6, std::abs(a), std::abs(numeric)});
            if (rel > worst) worst = rel;
            if (rel >= tol) {
                INFO("leaf " << i << " element " << j << ": analytic " << a << " numeric "
                             << numeric << " rel " << rel);
                REQUIRE(rel < tol);
            }
        }
    }
    INFO("max relative error " << worst);
    REQUIRE(worst < tol);
}

}  // namespace fd

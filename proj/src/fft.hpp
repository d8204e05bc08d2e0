#pragma once

#include "sqglab/field_core.hpp"

namespace sqg::fft {

// Normalized forward transform: out = DFT(in) / n^2, half layout.
void forward(int n, const double* in, cplx* out);
// Inverse of forward; `in` is not modified.
void inverse(int n, const cplx* in, double* out);

std::vector<cplx> forward(const Grid& g, const std::vector<double>& v);
std::vector<double> inverse(const Grid& g, const std::vector<cplx>& c);

}  // namespace sqg::fft

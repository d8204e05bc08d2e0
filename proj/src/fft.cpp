#include "fft.hpp"

#include <fftw3.h>

#include <cstdlib>
#include <cstring>
#include <map>
#include <mutex>
#include <string>

namespace sqg::fft {
namespace {

struct Plans {
    fftw_plan r2c = nullptr;
    fftw_plan c2r = nullptr;
};

unsigned planner_flags() {
    const char* env = std::getenv("SQGLAB_FFT_PLAN");
    std::string mode = env ? env : "estimate";
    unsigned f = FFTW_UNALIGNED;
    if (mode == "measure") return f | FFTW_MEASURE;
    if (mode == "patient") return f | FFTW_PATIENT;
    return f | FFTW_ESTIMATE;
}

std::mutex plan_mutex;
std::map<int, Plans>& plan_cache() {
    static std::map<int, Plans> cache;
    return cache;
}

const Plans& plans_for(int n) {
    std::lock_guard<std::mutex> lock(plan_mutex);
    auto& cache = plan_cache();
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;
    std::size_t nr = static_cast<std::size_t>(n) * n;
    std::size_t nc = static_cast<std::size_t>(n) * (n / 2 + 1);
    double* r = fftw_alloc_real(nr);
    fftw_complex* c = fftw_alloc_complex(nc);
    Plans p;
    unsigned flags = planner_flags();
    p.r2c = fftw_plan_dft_r2c_2d(n, n, r, c, flags);
    p.c2r = fftw_plan_dft_c2r_2d(n, n, c, r, flags);
    fftw_free(r);
    fftw_free(c);
    return cache.emplace(n, p).first->second;
}

}  // namespace

void forward(int n, const double* in, cplx* out) {
    const Plans& p = plans_for(n);
    // r2c does not overwrite its input, but FFTW's signature is non-const.
    fftw_execute_dft_r2c(p.r2c, const_cast<double*>(in), reinterpret_cast<fftw_complex*>(out));
    const double s = 1.0 / (static_cast<double>(n) * n);
    const std::size_t nc = static_cast<std::size_t>(n) * (n / 2 + 1);
    for (std::size_t k = 0; k < nc; ++k) out[k] *= s;
}

void inverse(int n, const cplx* in, double* out) {
    const Plans& p = plans_for(n);
    const std::size_t nc = static_cast<std::size_t>(n) * (n / 2 + 1);
    thread_local std::vector<cplx> scratch;
    scratch.assign(in, in + nc);
    fftw_execute_dft_c2r(p.c2r, reinterpret_cast<fftw_complex*>(scratch.data()), out);
}

std::vector<cplx> forward(const Grid& g, const std::vector<double>& v) {
    std::vector<cplx> out(g.spec_size());
    forward(g.n, v.data(), out.data());
    return out;
}

std::vector<double> inverse(const Grid& g, const std::vector<cplx>& c) {
    std::vector<double> out(g.size());
    inverse(g.n, c.data(), out.data());
    return out;
}

}  // namespace sqg::fft

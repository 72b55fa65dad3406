#include <riskshare/kernels.hpp>

#include <omp.h>

namespace riskshare {

int max_threads() {
    return omp_get_max_threads();
}

} // namespace riskshare

#pragma once

#include <cstddef>
#include <exception>
#include <functional>

#include <riskshare/execution.hpp>

namespace riskshare {

// Runs body(k) for k in [0, n). Each k must write only its own outputs.
template <class Body>
void serial_for(std::size_t n, Body&& body) {
    for (std::size_t k = 0; k < n; ++k) {
        body(k);
    }
}

template <class Body>
void omp_for(std::size_t n, Body&& body) {
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long k = 0; k < count; ++k) {
        body(static_cast<std::size_t>(k));
    }
}

template <class Body>
void parallel_for(std::size_t n, Body&& body, Exec exec) {
    if (exec == Exec::parallel && n > 1) {
        omp_for(n, body);
    } else {
        serial_for(n, body);
    }
}

// As parallel_for, but an exception thrown by body(k) is rethrown after the
// loop; when several indices fail the lowest one wins.
template <class Body>
void guarded_parallel_for(std::size_t n, Body&& body, Exec exec) {
    std::size_t failed = n;
    std::exception_ptr error;
    auto wrapped = [&](std::size_t k) {
        try {
            body(k);
        } catch (...) {
#pragma omp critical(riskshare_guarded_for)
            {
                if (k < failed) {
                    failed = k;
                    error = std::current_exception();
                }
            }
        }
    };
    parallel_for(n, wrapped, exec);
    if (error) {
        std::rethrow_exception(error);
    }
}

int max_threads();

} // namespace riskshare

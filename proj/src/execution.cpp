#include "drbsde/execution.hpp"

#include "drbsde/error.hpp"

#include <omp.h>

#include <cstdlib>
#include <string>

namespace drbsde {

void configure_threads(int requested) {
    int n = requested;
    if (n <= 0) {
        if (const char* env = std::getenv("DRBSDE_THREADS"); env != nullptr && *env != '\0') {
            try {
                n = std::stoi(env);
            } catch (const std::exception&) {
                throw ConfigError(std::string("DRBSDE_THREADS is not an integer: ") + env);
            }
            if (n <= 0) throw ConfigError("DRBSDE_THREADS must be positive");
        }
    }
    if (n > 0) omp_set_num_threads(n);
}

int active_threads() { return omp_get_max_threads(); }

}  // namespace drbsde

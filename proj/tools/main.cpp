#include "commands.hpp"

#include <malloc.h>

#include <iostream>

int main(int argc, char** argv) {
    // Training allocates and frees the same few hundred KB blocks every epoch;
    // keep them on the heap instead of mapping fresh zeroed pages each time.
    mallopt(M_MMAP_THRESHOLD, 64 << 20);
    mallopt(M_TRIM_THRESHOLD, 256 << 20);
    std::vector<std::string> args(argv + 1, argv + argc);
    return drbsde::cli::run(args, std::cout, std::cerr);
}

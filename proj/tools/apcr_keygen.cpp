#include <CLI11.hpp>

#include <iostream>

#include "apcr/demo.hpp"

using namespace apcr;

int main(int argc, char** argv) {
    CLI::App app{"apcr-keygen: provision a consistent demo key directory"};
    std::string outDir = "keys";
    uint64_t seed = 0;
    bool deterministic = false;
    app.add_option("--out", outDir, "directory to write key files into");
    app.add_option("--seed", seed, "deterministic seed (tests only)")
        ->needs(app.add_flag("--deterministic", deterministic,
                             "derive keys from --seed instead of the system "
                             "entropy pool"));
    CLI11_PARSE(app, argc, argv);

    try {
        if (deterministic) {
            DeterministicRng rng(seed);
            demo::generateKeyDir(outDir, rng);
        } else {
            SystemRng rng;
            demo::generateKeyDir(outDir, rng);
        }
        std::cout << "wrote demo credentials to " << outDir << "\n";
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "apcr-keygen: " << e.what() << "\n";
        return 2;
    }
}

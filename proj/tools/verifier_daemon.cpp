#include <CLI11.hpp>

#include <iostream>

#include "apcr/demo.hpp"
#include "apcr/net.hpp"

using namespace apcr;

int main(int argc, char** argv) {
    CLI::App app{"verifier-daemon: online appraisal service"};
    std::string role = "verifier";
    std::string variantStr = "lpm";
    std::string listen = "127.0.0.1:7002";
    std::string keysDir = "keys";
    std::string policyFile;
    int timeoutMs = 30000;
    int runs = 0;  // 0 = serve until killed
    app.add_option("--role", role, "role of this endpoint (must be verifier)");
    app.add_option("--variant", variantStr, "protocol variant: lpm or kdc");
    app.add_option("--listen", listen, "host:port to bind");
    app.add_option("--keys", keysDir, "directory with provisioned key files");
    app.add_option("--policy", policyFile, "reference-value policy file");
    app.add_option("--timeout", timeoutMs, "per-message timeout in ms");
    app.add_option("--runs", runs, "serve this many sessions then exit");
    CLI11_PARSE(app, argc, argv);

    if (role != "verifier") {
        std::cerr << "verifier-daemon only plays the verifier role\n";
        return 2;
    }

    try {
        auto variant = demo::variantFromString(variantStr);
        if (policyFile.empty()) policyFile = keysDir + "/policy.txt";
        auto keys = demo::VerifierKeys::load(keysDir, policyFile);
        auto channel = net::UdpChannel::bind(listen);
        SystemRng rng;
        auto log = [](const std::string& line) {
            std::cout << "[verifier-daemon] " << line << "\n";
        };
        log("listening on " + listen);

        int served = 0;
        while (runs == 0 || served < runs) {
            demo::verifierServeOnce(channel, keys, variant, rng,
                                    std::chrono::milliseconds(timeoutMs), log);
            ++served;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "[verifier-daemon] fatal: " << e.what() << "\n";
        return 2;
    }
}

#include <CLI11.hpp>

#include <iostream>

#include "apcr/demo.hpp"
#include "apcr/net.hpp"

using namespace apcr;

int main(int argc, char** argv) {
    CLI::App app{"keytag-rp: constrained relying party of the lock-and-key demo"};
    std::string role = "rp";
    std::string variantStr = "lpm";
    std::string listen = "127.0.0.1:7001";
    std::string keysDir = "keys";
    int timeoutMs = 30000;
    int runs = 1;
    app.add_option("--role", role, "role of this endpoint (must be rp)");
    app.add_option("--variant", variantStr, "protocol variant: lpm or kdc");
    app.add_option("--listen", listen, "host:port to bind");
    app.add_option("--keys", keysDir, "directory with provisioned key files");
    app.add_option("--timeout", timeoutMs, "per-message timeout in ms");
    app.add_option("--runs", runs, "number of key-transfer requests to serve");
    CLI11_PARSE(app, argc, argv);

    if (role != "rp") {
        std::cerr << "keytag-rp only plays the rp role\n";
        return 2;
    }

    try {
        auto variant = demo::variantFromString(variantStr);
        auto keys = demo::RpKeys::load(keysDir);
        auto channel = net::UdpChannel::bind(listen);
        SystemRng rng;
        auto log = [](const std::string& line) {
            std::cout << "[keytag-rp] " << line << "\n";
        };
        log("listening on " + listen);

        bool allApproved = true;
        for (int i = 0; i < runs; ++i) {
            auto stats = demo::rpServeOnce(channel, keys, variant, rng,
                                           std::chrono::milliseconds(timeoutMs),
                                           log);
            bool approved = stats.accepted &&
                            stats.decision == roles::Decision::Trust &&
                            stats.sentRealKey;
            if (!approved) allApproved = false;
            if (stats.reason)
                log(std::string("run rejected: ") +
                    roles::to_string(*stats.reason));
        }
        return allApproved ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "[keytag-rp] fatal: " << e.what() << "\n";
        return 2;
    }
}

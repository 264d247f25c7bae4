#include <CLI11.hpp>

#include <iostream>
#include <map>

#include "apcr/bench.hpp"
#include "apcr/demo.hpp"
#include "apcr/net.hpp"

using namespace apcr;

int main(int argc, char** argv) {
    CLI::App app{"phone-attester: device proving its state to the keytag"};
    std::string role = "attester";
    std::string variantStr = "lpm";
    std::vector<std::string> peers;
    std::string keysDir = "keys";
    std::string policyFile;
    int timeoutMs = 30000;
    int benchReps = 0;
    app.add_option("--role", role, "role of this endpoint (must be attester)");
    app.add_option("--variant", variantStr, "protocol variant: lpm or kdc");
    app.add_option("--peer", peers,
                   "peer endpoints, rp=host:port and verifier=host:port");
    app.add_option("--keys", keysDir, "directory with provisioned key files");
    app.add_option("--policy", policyFile,
                   "policy file (benchmark mode hosts its own verifier)");
    app.add_option("--timeout", timeoutMs, "per-message timeout in ms");
    app.add_option("--bench", benchReps,
                   "run the timing experiments with N repetitions")
        ->expected(0, 1)
        ->default_str("10");
    CLI11_PARSE(app, argc, argv);

    if (role != "attester") {
        std::cerr << "phone-attester only plays the attester role\n";
        return 2;
    }

    try {
        if (app.count("--bench")) {
            if (benchReps == 0) benchReps = 10;
            if (policyFile.empty())
                policyFile = keysDir + "/policy.txt";
            auto report = bench::benchRun(keysDir, policyFile, benchReps,
                                          std::chrono::milliseconds(timeoutMs));
            std::cout << report.summary();
            return 0;
        }

        std::map<std::string, std::string> peerMap;
        for (const auto& peer : peers) {
            auto eq = peer.find('=');
            if (eq == std::string::npos)
                throw ArgumentError("--peer expects role=host:port");
            peerMap[peer.substr(0, eq)] = peer.substr(eq + 1);
        }
        if (!peerMap.contains("rp") || !peerMap.contains("verifier"))
            throw ArgumentError("need --peer rp=... and --peer verifier=...");

        auto variant = demo::variantFromString(variantStr);
        auto keys = demo::AttesterKeys::load(keysDir);
        auto toRp = net::UdpChannel::connectTo(peerMap["rp"]);
        auto toVerifier = net::UdpChannel::connectTo(peerMap["verifier"]);
        SystemRng rng;
        auto log = [](const std::string& line) {
            std::cout << "[phone-attester] " << line << "\n";
        };

        auto stats = demo::attesterRunOnce(toRp, toVerifier, keys, variant,
                                           rng,
                                           std::chrono::milliseconds(timeoutMs),
                                           log);
        return stats.keyObtained ? 0 : 1;
    } catch (const std::exception& e) {
        std::cerr << "[phone-attester] fatal: " << e.what() << "\n";
        return 2;
    }
}

// mock_fleet.hpp
//
// Mock ePDG fleet: one UDP listener per operator, each answering SA_INIT
// requests through its own EpdgResponder on a dedicated thread.

#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "epdg/discovery/discovery.hpp"
#include "epdg/sim/policy.hpp"

namespace epdg::cli {

struct MockOperator {
    discovery::PlmnId plmn{"001", "01"};
    sim::EpdgPolicy policy;
    std::string listen_address = "127.0.0.1";
    std::uint16_t listen_port = 0;  // 0 picks a free port
    bool nat_t = false;             // expect and send the non-ESP marker
    std::uint64_t seed = 1;
    // reserves a port but never listens; probes see ICMP port unreachable
    bool offline = false;
};

struct SharedKeyPool {
    std::vector<dh::BigInt> exponents;
    std::vector<discovery::PlmnId> operators;
    // false derives an independent exponent per group
    bool shared_across_groups = true;
};

struct MockFleetSpec {
    std::vector<MockOperator> operators;
    std::optional<SharedKeyPool> shared_key_pool;

    // Throws InvariantViolation: duplicate fixed listen endpoints, pool
    // operators outside the fleet, or an empty pool.
    void validate() const;
    // shared pool folded into the member policies
    std::vector<MockOperator> effective_operators() const;
};

// {"operators": [{"plmn", "listen", "policy", "seed", "nat_t", "offline"}],
//  "shared_key_pool": {"exponents": [hex], "operators": [plmn],
//                      "shared_across_groups": bool}}
MockFleetSpec fleet_from_json(const nlohmann::json& j);

class MockFleet {
public:
    explicit MockFleet(MockFleetSpec spec);
    ~MockFleet();
    MockFleet(const MockFleet&) = delete;
    MockFleet& operator=(const MockFleet&) = delete;

    // Binds every listener, then starts the handlers. Throws AddressInUse or
    // UnauthorizedTarget (non-local bind address).
    void start();
    void stop();

    // bound endpoints as probe targets, in spec order
    std::vector<discovery::EpdgTarget> targets() const;

    // arrival times of requests at listener i
    std::vector<std::chrono::steady_clock::time_point> request_times(std::size_t i) const;
    std::size_t size() const { return listeners_.size(); }

private:
    struct Listener;
    void serve(Listener& l);

    MockFleetSpec spec_;
    std::vector<std::unique_ptr<Listener>> listeners_;
    std::atomic<bool> running_{false};
};

}  // namespace epdg::cli

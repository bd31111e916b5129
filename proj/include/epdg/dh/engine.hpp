// engine.hpp
//
// Finite-field Diffie-Hellman over the IKE MODP groups, plus public-key
// fingerprints in the form used by the static-key blacklist.

#pragma once

#include <gmpxx.h>

#include <cstdint>
#include <string>
#include <vector>

#include "epdg/common/bytes.hpp"
#include "epdg/common/random.hpp"

namespace epdg::dh {

using BigInt = mpz_class;

struct DhGroup {
    int id = 0;  // IKE transform id; 0 for ad-hoc groups
    BigInt p;
    BigInt g;
    unsigned bits = 0;

    std::size_t octets() const { return (bits + 7) / 8; }

    // ad-hoc group (toy moduli in tests); p must be an odd prime > 3, 1 < g < p
    static DhGroup custom(BigInt p, BigInt g);
};

// Groups 1, 2, 5, 14, 15, 16, 17, 18. Throws UnknownGroup otherwise
// (ECP codes included).
const DhGroup& group_params(int id);

const std::vector<int>& supported_group_ids();

struct DhKeyPair {
    DhGroup group;
    BigInt private_exponent;
    BigInt public_value;
};

// Private exponent drawn uniformly from [2, p-2] using the full modulus width.
DhKeyPair gen_keypair(const DhGroup& group, RandomSource& rng);

// Throws InvariantViolation unless 1 < a < p-1.
DhKeyPair keypair_from_exponent(const DhGroup& group, const BigInt& a);

struct SharedSecret {
    int group_id = 0;
    BigInt value;
};

// K = peer^a mod p. Throws InvalidPeerKey for peer <= 1 or peer >= p.
// peer == p-1 is accepted; see is_degenerate_peer.
SharedSecret shared_secret(const DhGroup& group, const BigInt& a, const BigInt& peer);

// p-1 generates the order-2 subgroup; scans record it instead of aborting
bool is_degenerate_peer(const DhGroup& group, const BigInt& peer);

// big-endian, left-padded with zeros to `width` octets
Bytes to_bytes(const BigInt& v, std::size_t width);
BigInt from_bytes(ByteView b);
BigInt from_hex(const std::string& hex);
std::string to_hex(const BigInt& v);

// SHA-256 over the public value in network order, zero-padded to the group's
// modulus length; lowercase hex
std::string pubkey_fingerprint(const BigInt& public_value, const DhGroup& group);

}  // namespace epdg::dh

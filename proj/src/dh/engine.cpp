#include "epdg/dh/engine.hpp"

#include <algorithm>
#include <map>
#include <memory>
#include <mutex>
#include <string_view>

#include "epdg/common/errors.hpp"

namespace epdg::dh {

namespace {

#include "modp_primes.inc"

DhGroup make_group(int id, std::string_view hex) {
    DhGroup g;
    g.id = id;
    g.p.set_str(std::string(hex), 16);
    g.g = 2;
    g.bits = static_cast<unsigned>(mpz_sizeinbase(g.p.get_mpz_t(), 2));
    return g;
}

const std::map<int, DhGroup>& registry() {
    static const std::map<int, DhGroup> groups = [] {
        std::map<int, DhGroup> m;
        m.emplace(1, make_group(1, kModp1));
        m.emplace(2, make_group(2, kModp2));
        m.emplace(5, make_group(5, kModp5));
        m.emplace(14, make_group(14, kModp14));
        m.emplace(15, make_group(15, kModp15));
        m.emplace(16, make_group(16, kModp16));
        m.emplace(17, make_group(17, kModp17));
        m.emplace(18, make_group(18, kModp18));
        return m;
    }();
    return groups;
}

// Powers g^(256^i) mod p for fixed-base exponentiation with octet digits.
// Only built for registry groups; the generator never changes there.
struct FixedBaseTable {
    std::vector<BigInt> powers;
};

std::shared_ptr<const FixedBaseTable> fixed_base_table(const DhGroup& group) {
    static std::mutex mu;
    static std::map<int, std::shared_ptr<const FixedBaseTable>> cache;
    std::lock_guard lock(mu);
    auto& slot = cache[group.id];
    if (!slot) {
        auto t = std::make_shared<FixedBaseTable>();
        const std::size_t digits = group.octets() + 1;
        t->powers.reserve(digits);
        BigInt x = group.g;
        for (std::size_t i = 0; i < digits; ++i) {
            t->powers.push_back(x);
            for (int k = 0; k < 8; ++k) {
                x *= x;
                mpz_mod(x.get_mpz_t(), x.get_mpz_t(), group.p.get_mpz_t());
            }
        }
        slot = std::move(t);
    }
    return slot;
}

// g^a as the product over d of (product of table entries whose digit is >= d)
BigInt fixed_base_pow(const DhGroup& group, const BigInt& a) {
    const auto table = fixed_base_table(group);
    Bytes digits((mpz_sizeinbase(a.get_mpz_t(), 2) + 7) / 8, 0);
    std::size_t count = 0;
    mpz_export(digits.data(), &count, -1, 1, 0, 0, a.get_mpz_t());
    std::vector<std::vector<std::size_t>> by_digit(256);
    for (std::size_t i = 0; i < count; ++i)
        if (digits[i] != 0) by_digit[digits[i]].push_back(i);
    BigInt acc = 1;
    BigInt run = 1;
    for (int d = 255; d >= 1; --d) {
        for (const std::size_t i : by_digit[d]) {
            run *= table->powers[i];
            mpz_mod(run.get_mpz_t(), run.get_mpz_t(), group.p.get_mpz_t());
        }
        if (run != 1) {
            acc *= run;
            mpz_mod(acc.get_mpz_t(), acc.get_mpz_t(), group.p.get_mpz_t());
        }
    }
    return acc;
}

bool is_registry_group(const DhGroup& group) {
    if (group.id == 0) return false;
    const auto& groups = registry();
    auto it = groups.find(group.id);
    return it != groups.end() && it->second.p == group.p && it->second.g == group.g;
}

}  // namespace

DhGroup DhGroup::custom(BigInt p, BigInt g) {
    if (p <= 3 || mpz_even_p(p.get_mpz_t())) throw InvariantViolation("modulus must be an odd prime > 3");
    if (g <= 1 || g >= p) throw InvariantViolation("generator must satisfy 1 < g < p");
    DhGroup grp;
    grp.p = std::move(p);
    grp.g = std::move(g);
    grp.bits = static_cast<unsigned>(mpz_sizeinbase(grp.p.get_mpz_t(), 2));
    return grp;
}

const DhGroup& group_params(int id) {
    const auto& groups = registry();
    auto it = groups.find(id);
    if (it == groups.end()) throw UnknownGroup(id);
    return it->second;
}

const std::vector<int>& supported_group_ids() {
    static const std::vector<int> ids{1, 2, 5, 14, 15, 16, 17, 18};
    return ids;
}

DhKeyPair keypair_from_exponent(const DhGroup& group, const BigInt& a) {
    if (a <= 1 || a >= group.p - 1) throw InvariantViolation("private exponent must satisfy 1 < a < p-1");
    DhKeyPair kp{group, a, {}};
    if (is_registry_group(group))
        kp.public_value = fixed_base_pow(group, a);
    else
        mpz_powm(kp.public_value.get_mpz_t(), group.g.get_mpz_t(), a.get_mpz_t(), group.p.get_mpz_t());
    return kp;
}

DhKeyPair gen_keypair(const DhGroup& group, RandomSource& rng) {
    // 64 extra bits keep the reduction bias negligible
    const Bytes raw = rng.bytes(group.octets() + 8);
    const BigInt r = from_bytes(raw);
    const BigInt range = group.p - 3;  // [2, p-2]
    BigInt a = r % range;
    a += 2;
    return keypair_from_exponent(group, a);
}

SharedSecret shared_secret(const DhGroup& group, const BigInt& a, const BigInt& peer) {
    if (peer <= 1 || peer >= group.p) throw InvalidPeerKey("peer public value outside (1, p)");
    SharedSecret s{group.id, {}};
    mpz_powm(s.value.get_mpz_t(), peer.get_mpz_t(), a.get_mpz_t(), group.p.get_mpz_t());
    return s;
}

bool is_degenerate_peer(const DhGroup& group, const BigInt& peer) { return peer == group.p - 1; }

Bytes to_bytes(const BigInt& v, std::size_t width) {
    const std::size_t needed = (mpz_sizeinbase(v.get_mpz_t(), 2) + 7) / 8;
    if (v < 0 || needed > width) throw InvariantViolation("value does not fit the requested width");
    Bytes out(width, 0);
    std::size_t count = 0;
    if (v != 0) mpz_export(out.data() + (width - needed), &count, 1, 1, 1, 0, v.get_mpz_t());
    return out;
}

BigInt from_bytes(ByteView b) {
    BigInt v;
    if (!b.empty()) mpz_import(v.get_mpz_t(), b.size(), 1, 1, 1, 0, b.data());
    return v;
}

BigInt from_hex(const std::string& hex) {
    BigInt v;
    if (v.set_str(hex, 16) != 0) throw FormatError("invalid hex integer: " + hex);
    return v;
}

std::string to_hex(const BigInt& v) { return v.get_str(16); }

std::string pubkey_fingerprint(const BigInt& public_value, const DhGroup& group) {
    return sha256_hex(to_bytes(public_value, group.octets()));
}

}  // namespace epdg::dh

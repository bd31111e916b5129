// codec.hpp
//
// IKEv2 wire format for the IKE_SA_INIT subset: SA, KE, Nonce and Notify
// payloads. Any other payload type is carried as an opaque payload so that
// unexpected server answers decode (and re-encode) without loss.
//
//                          1                   2                   3
//     0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1 2 3 4 5 6 7 8 9 0 1
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//    |                       IKE SA Initiator's SPI                  |
//    |                                                               |
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//    |                       IKE SA Responder's SPI                  |
//    |                                                               |
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//    |  Next Payload | MjVer | MnVer | Exchange Type |     Flags     |
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//    |                          Message ID                           |
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+
//    |                            Length                             |
//    +-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+-+

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "epdg/common/bytes.hpp"
#include "epdg/common/random.hpp"

namespace epdg::ike {

constexpr std::size_t kHeaderSize = 28;
constexpr std::size_t kGenericHeaderSize = 4;
constexpr std::uint8_t kVersion2 = 0x20;

namespace exchange {
constexpr std::uint8_t kIkeSaInit = 34;
constexpr std::uint8_t kIkeAuth = 35;
constexpr std::uint8_t kCreateChildSa = 36;
constexpr std::uint8_t kInformational = 37;
}  // namespace exchange

namespace flags {
constexpr std::uint8_t kInitiator = 0x08;
constexpr std::uint8_t kVersion = 0x10;
constexpr std::uint8_t kResponse = 0x20;
}  // namespace flags

namespace payload_type {
constexpr std::uint8_t kNone = 0;
constexpr std::uint8_t kSa = 33;
constexpr std::uint8_t kKe = 34;
constexpr std::uint8_t kNonce = 40;
constexpr std::uint8_t kNotify = 41;
}  // namespace payload_type

namespace transform_type {
constexpr std::uint8_t kEncr = 1;
constexpr std::uint8_t kPrf = 2;
constexpr std::uint8_t kInteg = 3;
constexpr std::uint8_t kKeGroup = 4;
}  // namespace transform_type

namespace protocol {
constexpr std::uint8_t kIke = 1;
}

namespace notify_type {
constexpr std::uint16_t kInvalidSyntax = 7;
constexpr std::uint16_t kNoProposalChosen = 14;
constexpr std::uint16_t kInvalidKePayload = 17;
}  // namespace notify_type

// IANA transform ids used by the default proposal
namespace encr {
constexpr std::uint16_t kAesCbc = 12;
}
namespace prf {
constexpr std::uint16_t kHmacSha1 = 2;
constexpr std::uint16_t kHmacSha2_256 = 5;
}
namespace integ {
constexpr std::uint16_t kHmacSha1_96 = 2;
constexpr std::uint16_t kHmacSha2_256_128 = 12;
}
constexpr std::uint16_t kAttrKeyLength = 14;

using Spi = std::array<std::uint8_t, 8>;

struct IkeHeader {
    Spi initiator_spi{};
    Spi responder_spi{};
    std::uint8_t next_payload = payload_type::kNone;
    std::uint8_t version = kVersion2;
    std::uint8_t exchange_type = exchange::kIkeSaInit;
    std::uint8_t flags = 0;
    std::uint32_t message_id = 0;
    std::uint32_t length = kHeaderSize;

    bool operator==(const IkeHeader&) const = default;
};

// TV attributes (AF bit set) carry exactly two octets in `value`
struct Attribute {
    std::uint16_t type = 0;
    bool tv = true;
    Bytes value;

    bool operator==(const Attribute&) const = default;
};

struct Transform {
    std::uint8_t type = 0;
    std::uint16_t id = 0;
    std::vector<Attribute> attributes;

    bool operator==(const Transform&) const = default;
};

Transform make_transform(std::uint8_t type, std::uint16_t id);
Transform make_transform(std::uint8_t type, std::uint16_t id, std::uint16_t key_length);

struct Proposal {
    std::uint8_t number = 1;
    std::uint8_t protocol = protocol::kIke;
    Bytes spi;
    std::vector<Transform> transforms;

    bool operator==(const Proposal&) const = default;
};

struct SaPayload {
    std::vector<Proposal> proposals;
    bool operator==(const SaPayload&) const = default;
};

struct KePayload {
    std::uint16_t group = 0;
    Bytes data;
    bool operator==(const KePayload&) const = default;
};

struct NoncePayload {
    Bytes data;
    bool operator==(const NoncePayload&) const = default;
};

struct NotifyPayload {
    std::uint8_t protocol = 0;
    Bytes spi;
    std::uint16_t type = 0;
    Bytes data;
    bool operator==(const NotifyPayload&) const = default;
};

struct OpaquePayload {
    std::uint8_t type = 0;
    bool critical = false;
    Bytes body;
    bool operator==(const OpaquePayload&) const = default;
};

using Payload = std::variant<SaPayload, KePayload, NoncePayload, NotifyPayload, OpaquePayload>;

std::uint8_t type_of(const Payload& p);

struct IkeMessage {
    IkeHeader header;
    std::vector<Payload> payloads;

    bool operator==(const IkeMessage&) const = default;

    template <typename T>
    const T* find() const {
        for (const auto& p : payloads) {
            if (const auto* v = std::get_if<T>(&p)) return v;
        }
        return nullptr;
    }
};

// Sets header.next_payload and header.length to the values encode() writes.
void finalize(IkeMessage& msg);

// Throws InvariantViolation when a payload breaks its length or content rules.
void validate(const IkeMessage& msg);

// Validates, then serializes. The output header always carries the derived
// next-payload code and total length.
Bytes encode(const IkeMessage& msg);

// Throws Truncated, MalformedChain or MalformedPayload. Unknown payload types
// become OpaquePayload.
IkeMessage decode(ByteView raw);

// UDP/4500 carries a four-octet zero marker ahead of the IKE header
Bytes add_non_esp_marker(ByteView ike);
std::optional<ByteView> strip_non_esp_marker(ByteView datagram);

// ---- group metadata ----

bool is_modp_group(std::uint16_t id);
bool is_ecp_group(std::uint16_t id);
// MODP groups from the audited set plus ECP codes 19, 20, 21, 25, 26, 31
bool is_known_ke_group(std::uint16_t id);
// KE payload octet length for a known group
std::optional<std::size_t> ke_length(std::uint16_t id);
// security ranking used to compare groups across families
int group_strength(std::uint16_t id);
std::string group_name(std::uint16_t id);  // "DH14"

const std::vector<std::uint16_t>& modp_groups();  // 1,2,5,14..18
const std::vector<std::uint16_t>& ecp_groups();   // 19,20,21,25,26,31

// ---- message helpers ----

// KE-group transform ids across all proposals, in order of appearance
std::vector<std::uint16_t> offered_groups(const IkeMessage& msg);

std::string notify_name(std::uint16_t type);

// Sequence-diagram label, e.g. "SA_INIT([DH2, DH14], KE_DH14)" or
// "INVALID_KE(USE DH2)"
std::string describe(const IkeMessage& msg);

// ---- builders ----

struct ClientProposalSpec {
    std::vector<std::uint16_t> offered_groups;
    std::uint16_t chosen_group = 0;
    Bytes ke_data;
    // permits a chosen group outside the offered list
    bool allow_unoffered_chosen = false;
    std::vector<Transform> encryption;
    std::vector<Transform> prf;
    std::vector<Transform> integrity;
    std::optional<Spi> initiator_spi;
    std::optional<Bytes> nonce;
    std::size_t nonce_length = 32;
};

// AES-CBC 128/256, HMAC-SHA1 / SHA2-256 PRF and integrity
void apply_default_transforms(ClientProposalSpec& spec);

// Throws EmptyProposal when no groups are offered, InvariantViolation when
// the chosen group is not offered and the override is unset.
IkeMessage build_sa_init(const ClientProposalSpec& spec, epdg::RandomSource& rng);

// Responder answer accepting `group` with a single-proposal SA built from the
// request's first proposal.
IkeMessage build_sa_init_response(const IkeMessage& request, std::uint16_t group, Bytes ke_data,
                                  Bytes nonce, const Spi& responder_spi);

IkeMessage build_notify_response(const IkeMessage& request, std::uint16_t notify, Bytes data = {});

IkeMessage build_invalid_ke(const IkeMessage& request, std::uint16_t group);

}  // namespace epdg::ike

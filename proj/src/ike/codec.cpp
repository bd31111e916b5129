#include "epdg/ike/codec.hpp"

#include <algorithm>

#include "epdg/common/errors.hpp"

namespace epdg::ike {

namespace {

constexpr std::uint8_t kLastSubstructure = 0;
constexpr std::uint8_t kMoreProposals = 2;
constexpr std::uint8_t kMoreTransforms = 3;
constexpr std::size_t kMaxPayloadBody = 0xffff - kGenericHeaderSize;

struct GroupInfo {
    std::uint16_t id;
    std::size_t ke_octets;
    int strength;  // rough symmetric-equivalent ranking
    bool modp;
};

// MODP: modulus length in octets. ECP: x||y coordinates (RFC 5903 / 5114),
// Curve25519: 32 octets.
constexpr GroupInfo kGroups[] = {
    {1, 96, 768, true},      {2, 128, 1024, true},    {5, 192, 1536, true},
    {14, 256, 2048, true},   {15, 384, 3072, true},   {16, 512, 4096, true},
    {17, 768, 6144, true},   {18, 1024, 8192, true},  {25, 48, 1537, false},
    {26, 56, 2049, false},   {19, 64, 3073, false},   {31, 32, 3074, false},
    {20, 96, 7680, false},   {21, 132, 15360, false},
};

const GroupInfo* lookup(std::uint16_t id) {
    for (const auto& g : kGroups) {
        if (g.id == id) return &g;
    }
    return nullptr;
}

void put_generic_header(Bytes& out, std::uint8_t next, bool critical, std::size_t body_len) {
    out.push_back(next);
    out.push_back(critical ? 0x80 : 0x00);
    put_u16(out, static_cast<std::uint16_t>(body_len + kGenericHeaderSize));
}

void encode_transform(Bytes& out, const Transform& t, bool last) {
    Bytes attrs;
    for (const auto& a : t.attributes) {
        if (a.tv) {
            put_u16(attrs, static_cast<std::uint16_t>(0x8000 | a.type));
            attrs.insert(attrs.end(), a.value.begin(), a.value.end());
        } else {
            put_u16(attrs, static_cast<std::uint16_t>(a.type & 0x7fff));
            put_u16(attrs, static_cast<std::uint16_t>(a.value.size()));
            attrs.insert(attrs.end(), a.value.begin(), a.value.end());
        }
    }
    out.push_back(last ? kLastSubstructure : kMoreTransforms);
    out.push_back(0);
    put_u16(out, static_cast<std::uint16_t>(8 + attrs.size()));
    out.push_back(t.type);
    out.push_back(0);
    put_u16(out, t.id);
    out.insert(out.end(), attrs.begin(), attrs.end());
}

Bytes encode_sa(const SaPayload& sa) {
    Bytes body;
    for (std::size_t i = 0; i < sa.proposals.size(); ++i) {
        const auto& p = sa.proposals[i];
        Bytes transforms;
        for (std::size_t k = 0; k < p.transforms.size(); ++k) {
            encode_transform(transforms, p.transforms[k], k + 1 == p.transforms.size());
        }
        body.push_back(i + 1 == sa.proposals.size() ? kLastSubstructure : kMoreProposals);
        body.push_back(0);
        put_u16(body, static_cast<std::uint16_t>(8 + p.spi.size() + transforms.size()));
        body.push_back(p.number);
        body.push_back(p.protocol);
        body.push_back(static_cast<std::uint8_t>(p.spi.size()));
        body.push_back(static_cast<std::uint8_t>(p.transforms.size()));
        body.insert(body.end(), p.spi.begin(), p.spi.end());
        body.insert(body.end(), transforms.begin(), transforms.end());
    }
    return body;
}

Bytes encode_body(const Payload& p) {
    Bytes body;
    std::visit(
        [&](const auto& v) {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SaPayload>) {
                body = encode_sa(v);
            } else if constexpr (std::is_same_v<T, KePayload>) {
                put_u16(body, v.group);
                put_u16(body, 0);
                body.insert(body.end(), v.data.begin(), v.data.end());
            } else if constexpr (std::is_same_v<T, NoncePayload>) {
                body = v.data;
            } else if constexpr (std::is_same_v<T, NotifyPayload>) {
                body.push_back(v.protocol);
                body.push_back(static_cast<std::uint8_t>(v.spi.size()));
                put_u16(body, v.type);
                body.insert(body.end(), v.spi.begin(), v.spi.end());
                body.insert(body.end(), v.data.begin(), v.data.end());
            } else {
                body = v.body;
            }
        },
        p);
    return body;
}

bool payload_critical(const Payload& p) {
    if (const auto* o = std::get_if<OpaquePayload>(&p)) return o->critical;
    return false;
}

// ---- decoding ----

Transform decode_transform(ByteView b) {
    if (b.size() < 8) throw MalformedPayload("transform shorter than 8 octets");
    Transform t;
    t.type = b[4];
    t.id = get_u16(b, 6);
    std::size_t off = 8;
    while (off < b.size()) {
        if (off + 4 > b.size()) throw MalformedPayload("truncated transform attribute");
        const std::uint16_t raw_type = get_u16(b, off);
        Attribute a;
        a.type = raw_type & 0x7fff;
        a.tv = (raw_type & 0x8000) != 0;
        if (a.tv) {
            a.value.assign(b.begin() + off + 2, b.begin() + off + 4);
            off += 4;
        } else {
            const std::size_t len = get_u16(b, off + 2);
            if (off + 4 + len > b.size()) throw MalformedPayload("attribute overruns transform");
            a.value.assign(b.begin() + off + 4, b.begin() + off + 4 + len);
            off += 4 + len;
        }
        t.attributes.push_back(std::move(a));
    }
    return t;
}

Proposal decode_proposal(ByteView b) {
    if (b.size() < 8) throw MalformedPayload("proposal shorter than 8 octets");
    Proposal p;
    p.number = b[4];
    p.protocol = b[5];
    const std::size_t spi_size = b[6];
    const std::size_t n_transforms = b[7];
    if (8 + spi_size > b.size()) throw MalformedPayload("proposal SPI overruns proposal");
    p.spi.assign(b.begin() + 8, b.begin() + 8 + spi_size);
    std::size_t off = 8 + spi_size;
    for (std::size_t i = 0; i < n_transforms; ++i) {
        if (off + 8 > b.size()) throw MalformedPayload("transform count exceeds proposal");
        const std::uint8_t marker = b[off];
        const std::size_t len = get_u16(b, off + 2);
        if (len < 8 || off + len > b.size()) throw MalformedPayload("bad transform length");
        const bool last = i + 1 == n_transforms;
        if (marker != (last ? kLastSubstructure : kMoreTransforms))
            throw MalformedPayload("inconsistent transform last/more marker");
        p.transforms.push_back(decode_transform(b.subspan(off, len)));
        off += len;
    }
    if (off != b.size()) throw MalformedPayload("trailing octets in proposal");
    return p;
}

SaPayload decode_sa(ByteView b) {
    SaPayload sa;
    std::size_t off = 0;
    bool more = true;
    while (more) {
        if (off + 8 > b.size()) throw MalformedPayload("truncated proposal");
        const std::uint8_t marker = b[off];
        if (marker != kLastSubstructure && marker != kMoreProposals)
            throw MalformedPayload("bad proposal last/more marker");
        const std::size_t len = get_u16(b, off + 2);
        if (len < 8 || off + len > b.size()) throw MalformedPayload("bad proposal length");
        sa.proposals.push_back(decode_proposal(b.subspan(off, len)));
        off += len;
        more = marker == kMoreProposals;
    }
    if (off != b.size()) throw MalformedPayload("trailing octets in SA payload");
    return sa;
}

Payload decode_body(std::uint8_t type, bool critical, ByteView b) {
    switch (type) {
        case payload_type::kSa:
            return decode_sa(b);
        case payload_type::kKe: {
            if (b.size() < 4) throw MalformedPayload("KE payload shorter than 4 octets");
            KePayload ke;
            ke.group = get_u16(b, 0);
            ke.data.assign(b.begin() + 4, b.end());
            return ke;
        }
        case payload_type::kNonce:
            return NoncePayload{Bytes(b.begin(), b.end())};
        case payload_type::kNotify: {
            if (b.size() < 4) throw MalformedPayload("notify payload shorter than 4 octets");
            NotifyPayload n;
            n.protocol = b[0];
            const std::size_t spi_size = b[1];
            n.type = get_u16(b, 2);
            if (4 + spi_size > b.size()) throw MalformedPayload("notify SPI overruns payload");
            n.spi.assign(b.begin() + 4, b.begin() + 4 + spi_size);
            n.data.assign(b.begin() + 4 + spi_size, b.end());
            return n;
        }
        default:
            return OpaquePayload{type, critical, Bytes(b.begin(), b.end())};
    }
}

void validate_proposal(const Proposal& p) {
    if (p.transforms.empty()) throw InvariantViolation("proposal without transforms");
    if (p.transforms.size() > 255) throw InvariantViolation("too many transforms");
    if (p.spi.size() > 255) throw InvariantViolation("proposal SPI too long");
    bool seen[5] = {};
    for (const auto& t : p.transforms) {
        if (t.type >= 1 && t.type <= 4) seen[t.type] = true;
        if (t.type == transform_type::kKeGroup && !is_known_ke_group(t.id))
            throw InvariantViolation("KE-group transform id " + std::to_string(t.id) +
                                     " is not a supported group code");
        for (const auto& a : t.attributes) {
            if (a.tv && a.value.size() != 2)
                throw InvariantViolation("TV attribute value must be two octets");
            if (!a.tv && a.value.size() > 0xffff) throw InvariantViolation("attribute too long");
            if (a.type > 0x7fff) throw InvariantViolation("attribute type exceeds 15 bits");
        }
    }
    if (p.protocol == protocol::kIke && !(seen[1] && seen[2] && seen[3] && seen[4]))
        throw InvariantViolation("IKE proposal needs ENCR, PRF, INTEG and KE-group transforms");
}

}  // namespace

Transform make_transform(std::uint8_t type, std::uint16_t id) { return Transform{type, id, {}}; }

Transform make_transform(std::uint8_t type, std::uint16_t id, std::uint16_t key_length) {
    Transform t{type, id, {}};
    Attribute a;
    a.type = kAttrKeyLength;
    a.tv = true;
    put_u16(a.value, key_length);
    t.attributes.push_back(std::move(a));
    return t;
}

std::uint8_t type_of(const Payload& p) {
    return std::visit(
        [](const auto& v) -> std::uint8_t {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, SaPayload>) return payload_type::kSa;
            else if constexpr (std::is_same_v<T, KePayload>) return payload_type::kKe;
            else if constexpr (std::is_same_v<T, NoncePayload>) return payload_type::kNonce;
            else if constexpr (std::is_same_v<T, NotifyPayload>) return payload_type::kNotify;
            else return v.type;
        },
        p);
}

void validate(const IkeMessage& msg) {
    for (const auto& p : msg.payloads) {
        if (const auto* sa = std::get_if<SaPayload>(&p)) {
            if (sa->proposals.empty()) throw InvariantViolation("SA payload without proposals");
            if (sa->proposals.size() > 255) throw InvariantViolation("too many proposals");
            for (const auto& prop : sa->proposals) validate_proposal(prop);
        } else if (const auto* ke = std::get_if<KePayload>(&p)) {
            auto len = ke_length(ke->group);
            if (!len) throw InvariantViolation("KE payload for unsupported group " + std::to_string(ke->group));
            if (is_modp_group(ke->group) && ke->data.size() != *len)
                throw InvariantViolation("KE data for " + group_name(ke->group) + " must be " +
                                         std::to_string(*len) + " octets, got " +
                                         std::to_string(ke->data.size()));
            if (ke->data.empty()) throw InvariantViolation("empty KE data");
        } else if (const auto* n = std::get_if<NoncePayload>(&p)) {
            if (n->data.size() < 16 || n->data.size() > 256)
                throw InvariantViolation("nonce length must be within [16, 256], got " +
                                         std::to_string(n->data.size()));
        } else if (const auto* nt = std::get_if<NotifyPayload>(&p)) {
            if (nt->spi.size() > 255) throw InvariantViolation("notify SPI too long");
        } else if (const auto* o = std::get_if<OpaquePayload>(&p)) {
            if (o->type == payload_type::kNone) throw InvariantViolation("payload type 0 is reserved");
        }
    }
}

void finalize(IkeMessage& msg) {
    std::size_t total = kHeaderSize;
    for (const auto& p : msg.payloads) total += kGenericHeaderSize + encode_body(p).size();
    msg.header.next_payload = msg.payloads.empty() ? payload_type::kNone : type_of(msg.payloads.front());
    msg.header.length = static_cast<std::uint32_t>(total);
}

Bytes encode(const IkeMessage& msg) {
    validate(msg);
    Bytes payloads;
    for (std::size_t i = 0; i < msg.payloads.size(); ++i) {
        const Bytes body = encode_body(msg.payloads[i]);
        if (body.size() > kMaxPayloadBody) throw InvariantViolation("payload exceeds 65535 octets");
        const std::uint8_t next =
            i + 1 < msg.payloads.size() ? type_of(msg.payloads[i + 1]) : payload_type::kNone;
        put_generic_header(payloads, next, payload_critical(msg.payloads[i]), body.size());
        payloads.insert(payloads.end(), body.begin(), body.end());
    }
    Bytes out;
    out.reserve(kHeaderSize + payloads.size());
    const auto& h = msg.header;
    out.insert(out.end(), h.initiator_spi.begin(), h.initiator_spi.end());
    out.insert(out.end(), h.responder_spi.begin(), h.responder_spi.end());
    out.push_back(msg.payloads.empty() ? payload_type::kNone : type_of(msg.payloads.front()));
    out.push_back(h.version);
    out.push_back(h.exchange_type);
    out.push_back(h.flags);
    put_u32(out, h.message_id);
    put_u32(out, static_cast<std::uint32_t>(kHeaderSize + payloads.size()));
    out.insert(out.end(), payloads.begin(), payloads.end());
    return out;
}

IkeMessage decode(ByteView raw) {
    if (raw.size() < kHeaderSize)
        throw Truncated("message of " + std::to_string(raw.size()) + " octets is shorter than the IKE header");
    IkeMessage msg;
    auto& h = msg.header;
    std::copy_n(raw.begin(), 8, h.initiator_spi.begin());
    std::copy_n(raw.begin() + 8, 8, h.responder_spi.begin());
    h.next_payload = raw[16];
    h.version = raw[17];
    h.exchange_type = raw[18];
    h.flags = raw[19];
    h.message_id = get_u32(raw, 20);
    h.length = get_u32(raw, 24);
    if (h.length > raw.size())
        throw Truncated("length field " + std::to_string(h.length) + " exceeds buffer of " +
                        std::to_string(raw.size()));
    if (h.length < kHeaderSize) throw MalformedChain("length field smaller than the header");
    if (h.length != raw.size()) throw MalformedChain("octets beyond the declared message length");

    const ByteView body = raw.subspan(kHeaderSize, h.length - kHeaderSize);
    std::size_t off = 0;
    std::uint8_t next = h.next_payload;
    while (next != payload_type::kNone) {
        if (off + kGenericHeaderSize > body.size())
            throw MalformedChain("next-payload " + std::to_string(next) + " announced but no octets remain");
        const std::uint8_t following = body[off];
        const bool critical = (body[off + 1] & 0x80) != 0;
        const std::size_t len = get_u16(body, off + 2);
        if (len < kGenericHeaderSize) throw MalformedChain("payload length below generic header size");
        if (off + len > body.size()) throw Truncated("payload overruns message");
        msg.payloads.push_back(decode_body(next, critical, body.subspan(off + kGenericHeaderSize, len - kGenericHeaderSize)));
        off += len;
        next = following;
    }
    if (off != body.size()) throw MalformedChain("octets after the last payload");
    return msg;
}

Bytes add_non_esp_marker(ByteView ike) {
    Bytes out(4, 0);
    out.insert(out.end(), ike.begin(), ike.end());
    return out;
}

std::optional<ByteView> strip_non_esp_marker(ByteView datagram) {
    if (datagram.size() < 4 || datagram[0] || datagram[1] || datagram[2] || datagram[3]) return std::nullopt;
    return datagram.subspan(4);
}

// ---- group metadata ----

bool is_modp_group(std::uint16_t id) {
    const auto* g = lookup(id);
    return g && g->modp;
}

bool is_ecp_group(std::uint16_t id) {
    const auto* g = lookup(id);
    return g && !g->modp;
}

bool is_known_ke_group(std::uint16_t id) { return lookup(id) != nullptr; }

std::optional<std::size_t> ke_length(std::uint16_t id) {
    if (const auto* g = lookup(id)) return g->ke_octets;
    return std::nullopt;
}

int group_strength(std::uint16_t id) {
    if (const auto* g = lookup(id)) return g->strength;
    return 0;
}

std::string group_name(std::uint16_t id) { return "DH" + std::to_string(id); }

const std::vector<std::uint16_t>& modp_groups() {
    static const std::vector<std::uint16_t> groups{1, 2, 5, 14, 15, 16, 17, 18};
    return groups;
}

const std::vector<std::uint16_t>& ecp_groups() {
    static const std::vector<std::uint16_t> groups{19, 20, 21, 25, 26, 31};
    return groups;
}

// ---- helpers ----

std::vector<std::uint16_t> offered_groups(const IkeMessage& msg) {
    std::vector<std::uint16_t> out;
    if (const auto* sa = msg.find<SaPayload>()) {
        for (const auto& p : sa->proposals) {
            for (const auto& t : p.transforms) {
                if (t.type == transform_type::kKeGroup &&
                    std::find(out.begin(), out.end(), t.id) == out.end())
                    out.push_back(t.id);
            }
        }
    }
    return out;
}

std::string notify_name(std::uint16_t type) {
    switch (type) {
        case notify_type::kInvalidSyntax: return "INVALID_SYNTAX";
        case notify_type::kNoProposalChosen: return "NO_PROPOSAL_CHOSEN";
        case notify_type::kInvalidKePayload: return "INVALID_KE";
        default: return "NOTIFY_" + std::to_string(type);
    }
}

std::string describe(const IkeMessage& msg) {
    if (const auto* n = msg.find<NotifyPayload>(); n && !msg.find<KePayload>()) {
        if (n->type == notify_type::kInvalidKePayload && n->data.size() == 2)
            return "INVALID_KE(USE " + group_name(get_u16(n->data, 0)) + ")";
        return notify_name(n->type);
    }
    std::string name;
    switch (msg.header.exchange_type) {
        case exchange::kIkeSaInit: name = "SA_INIT"; break;
        case exchange::kCreateChildSa: name = "CREATE_CHILD_SA"; break;
        case exchange::kIkeAuth: name = "IKE_AUTH"; break;
        case exchange::kInformational: name = "INFORMATIONAL"; break;
        default: name = "EXCHANGE_" + std::to_string(msg.header.exchange_type);
    }
    const bool response = (msg.header.flags & flags::kResponse) != 0;
    std::string args;
    if (!response) {
        const auto groups = offered_groups(msg);
        args += "[";
        for (std::size_t i = 0; i < groups.size(); ++i) {
            if (i) args += ", ";
            args += group_name(groups[i]);
        }
        args += "]";
    }
    if (const auto* ke = msg.find<KePayload>()) {
        if (!args.empty()) args += ", ";
        args += "KE_" + group_name(ke->group);
    }
    return name + (response ? "_RESP" : "") + "(" + args + ")";
}

// ---- builders ----

void apply_default_transforms(ClientProposalSpec& spec) {
    if (spec.encryption.empty()) {
        spec.encryption.push_back(make_transform(transform_type::kEncr, encr::kAesCbc, 128));
        spec.encryption.push_back(make_transform(transform_type::kEncr, encr::kAesCbc, 256));
    }
    if (spec.prf.empty()) {
        spec.prf.push_back(make_transform(transform_type::kPrf, prf::kHmacSha2_256));
        spec.prf.push_back(make_transform(transform_type::kPrf, prf::kHmacSha1));
    }
    if (spec.integrity.empty()) {
        spec.integrity.push_back(make_transform(transform_type::kInteg, integ::kHmacSha2_256_128));
        spec.integrity.push_back(make_transform(transform_type::kInteg, integ::kHmacSha1_96));
    }
}

IkeMessage build_sa_init(const ClientProposalSpec& input, RandomSource& rng) {
    if (input.offered_groups.empty()) throw EmptyProposal("SA_INIT must offer at least one KE group");
    const bool offered = std::find(input.offered_groups.begin(), input.offered_groups.end(),
                                   input.chosen_group) != input.offered_groups.end();
    if (!offered && !input.allow_unoffered_chosen)
        throw InvariantViolation("chosen group " + group_name(input.chosen_group) + " is not offered");

    ClientProposalSpec spec = input;
    apply_default_transforms(spec);

    Proposal prop;
    prop.number = 1;
    prop.protocol = protocol::kIke;
    for (const auto* list : {&spec.encryption, &spec.prf, &spec.integrity}) {
        prop.transforms.insert(prop.transforms.end(), list->begin(), list->end());
    }
    for (auto g : spec.offered_groups) prop.transforms.push_back(make_transform(transform_type::kKeGroup, g));

    IkeMessage msg;
    if (spec.initiator_spi) {
        msg.header.initiator_spi = *spec.initiator_spi;
    } else {
        do {
            rng.fill(msg.header.initiator_spi);
        } while (std::all_of(msg.header.initiator_spi.begin(), msg.header.initiator_spi.end(),
                             [](auto b) { return b == 0; }));
    }
    msg.header.exchange_type = exchange::kIkeSaInit;
    msg.header.flags = flags::kInitiator;
    msg.header.message_id = 0;
    msg.payloads.emplace_back(SaPayload{{std::move(prop)}});
    msg.payloads.emplace_back(KePayload{spec.chosen_group, spec.ke_data});
    msg.payloads.emplace_back(NoncePayload{spec.nonce ? *spec.nonce : rng.bytes(spec.nonce_length)});
    finalize(msg);
    validate(msg);
    return msg;
}

namespace {
IkeMessage response_skeleton(const IkeMessage& request) {
    IkeMessage msg;
    msg.header.initiator_spi = request.header.initiator_spi;
    msg.header.exchange_type = request.header.exchange_type;
    msg.header.flags = flags::kResponse;
    msg.header.message_id = request.header.message_id;
    return msg;
}
}  // namespace

IkeMessage build_sa_init_response(const IkeMessage& request, std::uint16_t group, Bytes ke_data,
                                  Bytes nonce, const Spi& responder_spi) {
    IkeMessage msg = response_skeleton(request);
    msg.header.responder_spi = responder_spi;

    // pick the first transform of each type from the first IKE proposal
    Proposal chosen;
    chosen.number = 1;
    chosen.protocol = protocol::kIke;
    if (const auto* sa = request.find<SaPayload>(); sa && !sa->proposals.empty()) {
        const auto& first = sa->proposals.front();
        chosen.number = first.number;
        for (std::uint8_t type : {transform_type::kEncr, transform_type::kPrf, transform_type::kInteg}) {
            auto it = std::find_if(first.transforms.begin(), first.transforms.end(),
                                   [type](const Transform& t) { return t.type == type; });
            if (it != first.transforms.end()) chosen.transforms.push_back(*it);
        }
    }
    chosen.transforms.push_back(make_transform(transform_type::kKeGroup, group));
    msg.payloads.emplace_back(SaPayload{{std::move(chosen)}});
    msg.payloads.emplace_back(KePayload{group, std::move(ke_data)});
    msg.payloads.emplace_back(NoncePayload{std::move(nonce)});
    finalize(msg);
    return msg;
}

IkeMessage build_notify_response(const IkeMessage& request, std::uint16_t notify, Bytes data) {
    IkeMessage msg = response_skeleton(request);
    NotifyPayload n;
    n.protocol = 0;
    n.type = notify;
    n.data = std::move(data);
    msg.payloads.emplace_back(std::move(n));
    finalize(msg);
    return msg;
}

IkeMessage build_invalid_ke(const IkeMessage& request, std::uint16_t group) {
    Bytes data;
    put_u16(data, group);
    return build_notify_response(request, notify_type::kInvalidKePayload, std::move(data));
}

}  // namespace epdg::ike

#include "mqmc/encoders/checkpoint.hpp"

#include "mqmc/util/binary.hpp"

namespace mqmc::enc {

using util::ByteReader;
using util::ByteWriter;

BankSnapshot BankSnapshot::of(const bank::MultiQueue& q) {
    BankSnapshot s;
    s.side = q.side();
    s.keying = q.keying();
    s.capacity = q.capacity_per_queue();
    for (const auto& [id, n] : q.fill_report().per_queue) s.queue_ids.push_back(id);
    s.entries = q.entries();
    s.enqueued = q.total_enqueued();
    s.drawn = q.total_drawn();
    s.evicted = q.total_evicted();
    return s;
}

bank::MultiQueue BankSnapshot::restore() const {
    bank::MultiQueue q(side, queue_ids, capacity, keying);
    q.enqueue(entries);
    q.set_counters(enqueued, drawn, evicted);
    return q;
}

namespace {

void put_tensor(ByteWriter& w, const num::Tensor<float>& t) {
    w.u32(static_cast<std::uint32_t>(t.rank()));
    for (std::size_t e : t.shape()) w.u64(e);
    for (float v : t.values()) w.f32(v);
}

num::Tensor<float> get_tensor(ByteReader& r) {
    const std::uint32_t rank = r.u32();
    if (rank < 1 || rank > 2) throw CheckpointError("checkpoint: bad tensor rank " + std::to_string(rank));
    num::Shape shape(rank);
    for (auto& e : shape) e = r.u64();
    std::vector<float> values(num::shape_size(shape));
    for (float& v : values) v = r.f32();
    return num::Tensor<float>(shape, std::move(values));
}

std::string params_section(const ModelParams<float>& params) {
    ByteWriter w;
    std::uint32_t records = 0;
    for (const auto& [role, set] : params.sets) records += static_cast<std::uint32_t>(set.tensors.size() + set.buffers.size());
    w.u32(records);
    for (const auto& [role, set] : params.sets) {
        for (int kind = 0; kind < 2; ++kind) {
            for (const auto& [name, t] : kind == 0 ? set.tensors : set.buffers) {
                w.str(role_name(role));
                w.str(name);
                w.u8(static_cast<std::uint8_t>(kind));
                w.u8(set.trainable ? 1 : 0);
                put_tensor(w, t);
            }
        }
    }
    return w.take();
}

ModelParams<float> read_params(ByteReader& r) {
    ModelParams<float> params;
    const std::uint32_t records = r.u32();
    for (std::uint32_t i = 0; i < records; ++i) {
        const Role role = role_from_name(r.str());
        const std::string name = r.str();
        const std::uint8_t kind = r.u8();
        const bool trainable = r.u8() != 0;
        ParamSet<float>& set = params.sets[role];
        set.role = role;
        set.trainable = trainable;
        (kind == 0 ? set.tensors : set.buffers).insert_or_assign(name, get_tensor(r));
    }
    return params;
}

std::string adam_section(const std::map<std::string, num::AdamState<float>>& adam) {
    ByteWriter w;
    w.u32(static_cast<std::uint32_t>(adam.size()));
    for (const auto& [key, s] : adam) {
        w.str(key);
        w.u64(s.step);
        put_tensor(w, s.first);
        put_tensor(w, s.second);
    }
    return w.take();
}

std::map<std::string, num::AdamState<float>> read_adam(ByteReader& r) {
    std::map<std::string, num::AdamState<float>> adam;
    const std::uint32_t n = r.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::string key = r.str();
        num::AdamState<float> s;
        s.step = r.u64();
        s.first = get_tensor(r);
        s.second = get_tensor(r);
        adam.emplace(key, std::move(s));
    }
    return adam;
}

std::string bank_section(const BankSnapshot& b) {
    ByteWriter w;
    w.u8(b.side == Side::Microvideo ? 0 : 1);
    w.u8(b.keying == bank::Keying::ByMiddle ? 0 : 1);
    w.u64(b.capacity);
    w.u32(static_cast<std::uint32_t>(b.queue_ids.size()));
    for (int id : b.queue_ids) w.i32(id);
    w.u64(b.enqueued);
    w.u64(b.drawn);
    w.u64(b.evicted);
    w.u32(static_cast<std::uint32_t>(b.entries.size()));
    for (const bank::QueueEntry& e : b.entries) {
        w.u64(e.id);
        w.i32(e.path.coarse);
        w.i32(e.path.middle);
        w.u64(e.step);
        w.u32(static_cast<std::uint32_t>(e.values.size()));
        for (double v : e.values) w.f32(static_cast<float>(v));
    }
    return w.take();
}

BankSnapshot read_bank(ByteReader& r) {
    BankSnapshot b;
    b.side = r.u8() == 0 ? Side::Microvideo : Side::Product;
    b.keying = r.u8() == 0 ? bank::Keying::ByMiddle : bank::Keying::Single;
    b.capacity = r.u64();
    b.queue_ids.resize(r.u32());
    for (int& id : b.queue_ids) id = r.i32();
    b.enqueued = r.u64();
    b.drawn = r.u64();
    b.evicted = r.u64();
    b.entries.resize(r.u32());
    for (bank::QueueEntry& e : b.entries) {
        e.id = r.u64();
        e.path.coarse = r.i32();
        e.path.middle = r.i32();
        e.step = r.u64();
        e.values.resize(r.u32());
        for (double& v : e.values) v = r.f32();
    }
    return b;
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
    std::vector<std::pair<std::string, std::string>> sections;
    sections.emplace_back("config", ckpt.config_text);
    sections.emplace_back("params", params_section(ckpt.params));
    sections.emplace_back("adam", adam_section(ckpt.adam));
    for (const BankSnapshot& b : ckpt.banks) sections.emplace_back(std::string("bank:") + side_name(b.side), bank_section(b));

    ByteWriter w;
    w.raw("MQMCCKPT");
    w.u32(kCheckpointVersion);
    w.u64(ckpt.config_hash);
    w.u64(ckpt.step);
    w.u32(static_cast<std::uint32_t>(sections.size()));
    for (const auto& [name, payload] : sections) {
        w.str(name);
        w.u64(payload.size());
        w.raw(payload);
    }
    return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
    try {
        ByteReader r(bytes);
        if (r.raw(8) != "MQMCCKPT") throw CheckpointError("checkpoint: bad magic");
        const std::uint32_t version = r.u32();
        if (version != kCheckpointVersion) {
            throw CheckpointError("checkpoint: unsupported version " + std::to_string(version));
        }
        Checkpoint ckpt;
        ckpt.config_hash = r.u64();
        ckpt.step = r.u64();
        const std::uint32_t count = r.u32();
        for (std::uint32_t i = 0; i < count; ++i) {
            const std::string name = r.str();
            const std::uint64_t length = r.u64();
            const std::string_view payload = r.raw(length);
            ByteReader section(payload);
            if (name == "config") ckpt.config_text = std::string(payload);
            else if (name == "params") ckpt.params = read_params(section);
            else if (name == "adam") ckpt.adam = read_adam(section);
            else if (name.rfind("bank:", 0) == 0) ckpt.banks.push_back(read_bank(section));
            // unknown sections are skipped
        }
        return ckpt;
    } catch (const std::out_of_range&) {
        throw CheckpointError("checkpoint: truncated data");
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    try {
        util::write_file(path, encode_checkpoint(ckpt));
    } catch (const CheckpointError&) {
        throw;
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
}

Checkpoint load_checkpoint(const std::string& path) {
    std::string bytes;
    try {
        bytes = util::read_file(path);
    } catch (const std::exception& e) {
        throw CheckpointError(e.what());
    }
    return decode_checkpoint(bytes);
}

}  // namespace mqmc::enc

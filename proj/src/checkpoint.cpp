#include "bnn/checkpoint.hpp"

#include "serial.hpp"

#include <fstream>
#include <sstream>

namespace bnn {

using serial::read_f64;
using serial::read_le;
using serial::write_f64;
using serial::write_le;

namespace {

enum class ParamKind : uint8_t { Direct = 0, Svd = 1, Tucker = 2, Holistic = 3 };

void write_shape(std::ostream& os, const Shape& s) {
    write_le<uint8_t>(os, static_cast<uint8_t>(s.size()));
    for (int64_t d : s) write_le<uint32_t>(os, static_cast<uint32_t>(d));
}

Shape read_shape(std::istream& is) {
    uint8_t order = read_le<uint8_t>(is);
    Shape s(order);
    for (auto& d : s) d = read_le<uint32_t>(is);
    return s;
}

void write_tensor(std::ostream& os, const DenseTensor& t) {
    write_shape(os, t.shape());
    serial::write_f64_array(os, t.values());
}

DenseTensor read_tensor(std::istream& is) {
    Shape s = read_shape(is);
    size_t n = static_cast<size_t>(shape_numel(s));
    return DenseTensor(std::move(s), serial::read_f64_array(is, n));
}

void write_matrix(std::ostream& os, const Matrix& m) {
    write_le<uint32_t>(os, static_cast<uint32_t>(m.rows));
    write_le<uint32_t>(os, static_cast<uint32_t>(m.cols));
    serial::write_f64_array(os, m.data);
}

Matrix read_matrix(std::istream& is) {
    int64_t rows = read_le<uint32_t>(is);
    int64_t cols = read_le<uint32_t>(is);
    return Matrix(rows, cols, serial::read_f64_array(is, static_cast<size_t>(rows * cols)));
}

void write_vec(std::ostream& os, const std::vector<double>& v) {
    write_le<uint32_t>(os, static_cast<uint32_t>(v.size()));
    serial::write_f64_array(os, v);
}

std::vector<double> read_vec(std::istream& is) {
    uint32_t n = read_le<uint32_t>(is);
    return serial::read_f64_array(is, n);
}

// Each entry serializes exactly its variant's factors; the format has no
// slot for a reconstructed weight tensor.
void write_param(std::ostream& os, const WeightParam& p) {
    if (const auto* d = std::get_if<DirectParam>(&p)) {
        write_le<uint8_t>(os, static_cast<uint8_t>(ParamKind::Direct));
        write_tensor(os, d->w);
    } else if (const auto* s = std::get_if<SvdParam>(&p)) {
        write_le<uint8_t>(os, static_cast<uint8_t>(ParamKind::Svd));
        write_matrix(os, s->u);
        write_matrix(os, s->v);
        write_shape(os, s->shape);
    } else if (const auto* t = std::get_if<TuckerParam>(&p)) {
        write_le<uint8_t>(os, static_cast<uint8_t>(ParamKind::Tucker));
        write_tensor(os, t->core);
        for (const Matrix& f : t->factors) write_matrix(os, f);
    } else {
        const auto& h = std::get<HolisticGroupParam>(p);
        write_le<uint8_t>(os, static_cast<uint8_t>(ParamKind::Holistic));
        write_le<uint32_t>(os, static_cast<uint32_t>(h.layer_count));
        write_tensor(os, h.core);
        for (const Matrix& f : h.factors) write_matrix(os, f);
    }
}

WeightParam read_param(std::istream& is) {
    auto kind = static_cast<ParamKind>(read_le<uint8_t>(is));
    switch (kind) {
        case ParamKind::Direct: return DirectParam{read_tensor(is)};
        case ParamKind::Svd: {
            SvdParam p;
            p.u = read_matrix(is);
            p.v = read_matrix(is);
            p.shape = read_shape(is);
            return p;
        }
        case ParamKind::Tucker: {
            TuckerParam p;
            p.core = read_tensor(is);
            p.factors.reserve(static_cast<size_t>(p.core.order()));
            for (int64_t k = 0; k < p.core.order(); ++k) p.factors.push_back(read_matrix(is));
            return p;
        }
        case ParamKind::Holistic: {
            HolisticGroupParam p;
            p.layer_count = read_le<uint32_t>(is);
            p.core = read_tensor(is);
            p.factors.reserve(static_cast<size_t>(p.core.order()));
            for (int64_t k = 0; k < p.core.order(); ++k) p.factors.push_back(read_matrix(is));
            return p;
        }
    }
    throw CheckpointError("checkpoint: unknown parametrization kind");
}

void write_slot(std::ostream& os, const OptimSlot& slot) {
    write_le<uint32_t>(os, static_cast<uint32_t>(slot.m.size()));
    for (size_t j = 0; j < slot.m.size(); ++j) {
        write_vec(os, slot.m[j]);
        write_vec(os, slot.v[j]);
    }
}

OptimSlot read_slot(std::istream& is) {
    OptimSlot slot;
    uint32_t n = read_le<uint32_t>(is);
    for (uint32_t j = 0; j < n; ++j) {
        slot.m.push_back(read_vec(is));
        slot.v.push_back(read_vec(is));
    }
    return slot;
}

}  // namespace

std::string serialize_state(const Checkpoint& ck) {
    std::ostringstream os(std::ios::binary);
    write_le<uint64_t>(os, static_cast<uint64_t>(ck.state.step));
    write_f64(os, ck.state.lr);
    write_le<uint64_t>(os, static_cast<uint64_t>(ck.epochs_done));
    write_f64(os, ck.norm_mean);
    write_f64(os, ck.norm_std);

    write_le<uint32_t>(os, static_cast<uint32_t>(ck.state.latents.size()));
    for (const LatentEntry& e : ck.state.latents) {
        write_param(os, e.param);
        write_slot(os, e.opt);
    }
    write_le<uint32_t>(os, static_cast<uint32_t>(ck.state.reals.size()));
    for (const RealEntry& e : ck.state.reals) {
        write_tensor(os, e.w);
        write_le<uint8_t>(os, e.bias.empty() ? 0 : 1);
        if (!e.bias.empty()) write_vec(os, e.bias);
        write_le<uint8_t>(os, e.decay ? 1 : 0);
        write_slot(os, e.opt);
    }
    write_le<uint32_t>(os, static_cast<uint32_t>(ck.state.alphas.size()));
    for (const AlphaEntry& e : ck.state.alphas) {
        write_vec(os, e.a);
        write_slot(os, e.opt);
    }
    write_le<uint32_t>(os, static_cast<uint32_t>(ck.state.bns.size()));
    for (const BnEntry& e : ck.state.bns) {
        write_vec(os, e.gamma);
        write_vec(os, e.beta);
        write_vec(os, e.running_mean);
        write_vec(os, e.running_var);
        write_slot(os, e.opt);
    }
    return os.str();
}

static Checkpoint deserialize_state(std::istream& is) {
    Checkpoint ck;
    ck.state.step = static_cast<int64_t>(read_le<uint64_t>(is));
    ck.state.lr = read_f64(is);
    ck.epochs_done = static_cast<int64_t>(read_le<uint64_t>(is));
    ck.norm_mean = read_f64(is);
    ck.norm_std = read_f64(is);

    uint32_t n = read_le<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        LatentEntry e{read_param(is), {}};
        e.opt = read_slot(is);
        ck.state.latents.push_back(std::move(e));
    }
    n = read_le<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        RealEntry e;
        e.w = read_tensor(is);
        if (read_le<uint8_t>(is)) e.bias = read_vec(is);
        e.decay = read_le<uint8_t>(is) != 0;
        e.opt = read_slot(is);
        ck.state.reals.push_back(std::move(e));
    }
    n = read_le<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        AlphaEntry e;
        e.a = read_vec(is);
        e.opt = read_slot(is);
        ck.state.alphas.push_back(std::move(e));
    }
    n = read_le<uint32_t>(is);
    for (uint32_t i = 0; i < n; ++i) {
        BnEntry e;
        e.gamma = read_vec(is);
        e.beta = read_vec(is);
        e.running_mean = read_vec(is);
        e.running_var = read_vec(is);
        e.opt = read_slot(is);
        ck.state.bns.push_back(std::move(e));
    }
    return ck;
}

static constexpr char kCkptMagic[4] = {'B', 'N', 'C', 'K'};
static constexpr uint16_t kCkptVersion = 1;

// The checksum covers config hash, payload size, and payload, so a flipped
// byte anywhere past the version field is caught.
static uint64_t container_checksum(uint64_t config_hash, const std::string& payload) {
    std::ostringstream os(std::ios::binary);
    write_le<uint64_t>(os, config_hash);
    write_le<uint64_t>(os, payload.size());
    std::string head = os.str();
    uint64_t h = serial::fnv1a(reinterpret_cast<const unsigned char*>(head.data()), head.size());
    return serial::fnv1a(reinterpret_cast<const unsigned char*>(payload.data()), payload.size(), h);
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    std::string payload = serialize_state(ck);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw CheckpointError("save_checkpoint: cannot open " + path);
    os.write(kCkptMagic, 4);
    write_le<uint16_t>(os, kCkptVersion);
    write_le<uint64_t>(os, ck.config_hash);
    write_le<uint64_t>(os, payload.size());
    write_le<uint64_t>(os, container_checksum(ck.config_hash, payload));
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!os) throw CheckpointError("save_checkpoint: write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, uint64_t expected_config_hash) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("load_checkpoint: cannot open " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCkptMagic, 4) != 0)
        throw CheckpointError("load_checkpoint: bad magic, not a checkpoint file");
    uint16_t version = read_le<uint16_t>(is);
    if (version != kCkptVersion)
        throw CheckpointError("load_checkpoint: incompatible format version " +
                              std::to_string(version) + " (expected " +
                              std::to_string(kCkptVersion) + ")");
    uint64_t stored_hash = read_le<uint64_t>(is);
    uint64_t size = read_le<uint64_t>(is);
    uint64_t checksum = read_le<uint64_t>(is);
    std::string payload(size, '\0');
    is.read(payload.data(), static_cast<std::streamsize>(size));
    if (is.gcount() != static_cast<std::streamsize>(size))
        throw CheckpointError("load_checkpoint: truncated payload");
    if (container_checksum(stored_hash, payload) != checksum)
        throw CheckpointError("load_checkpoint: checksum mismatch, file corrupted");
    if (expected_config_hash != 0 && stored_hash != expected_config_hash)
        throw CheckpointError("load_checkpoint: checkpoint was written by a different config");

    std::istringstream ps(payload, std::ios::binary);
    Checkpoint ck = deserialize_state(ps);
    ck.config_hash = stored_hash;
    return ck;
}

uint64_t file_hash(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw CheckpointError("file_hash: cannot open " + path);
    std::ostringstream buf;
    buf << is.rdbuf();
    std::string bytes = buf.str();
    return serial::fnv1a(bytes);
}

}  // namespace bnn

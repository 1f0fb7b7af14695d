#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

#include <zlib.h>

#include "json.hpp"
#include "ovid/error.hpp"
#include "ovid/model.hpp"

namespace ovid {
namespace {

using json = nlohmann::json;

constexpr char kMagic[8] = {'O', 'V', 'I', 'D', 'C', 'K', 'P', 'T'};

constexpr std::uint32_t tag(const char (&s)[5]) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(s[0])) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[1])) << 8 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[2])) << 16 |
           static_cast<std::uint32_t>(static_cast<unsigned char>(s[3])) << 24;
}

constexpr std::uint32_t kMeta = tag("META");
constexpr std::uint32_t kParams = tag("PRMS");
constexpr std::uint32_t kNorm = tag("NORM");
constexpr std::uint32_t kReference = tag("REFB");
constexpr std::uint32_t kChecksum = tag("CRC ");

class Writer {
public:
    void u8(std::uint8_t v) { bytes_.push_back(static_cast<char>(v)); }
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            u8(static_cast<std::uint8_t>(v >> (8 * i)));
        }
    }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    void f64s(std::span<const double> vs) {
        u64(vs.size());
        for (double v : vs) {
            f64(v);
        }
    }
    void raw(std::string_view s) { bytes_.append(s); }
    void section(std::uint32_t t, const Writer& body) {
        u32(t);
        u64(body.bytes_.size());
        raw(body.bytes_);
    }
    const std::string& bytes() const noexcept { return bytes_; }

private:
    std::string bytes_;
};

class Reader {
public:
    explicit Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(bytes_[pos_++]);
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(u8()) << (8 * i);
        }
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(u8()) << (8 * i);
        }
        return v;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::vector<double> f64s() {
        const auto n = u64();
        need(n * 8);
        std::vector<double> out(n);
        for (auto& v : out) {
            v = f64();
        }
        return out;
    }
    std::string_view take(std::size_t n) {
        need(n);
        auto s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    std::size_t pos() const noexcept { return pos_; }
    bool done() const noexcept { return pos_ == bytes_.size(); }

private:
    void need(std::size_t n) const {
        if (bytes_.size() - pos_ < n) {
            throw Error(ErrorCode::Io, what_ + " truncated at byte " + std::to_string(pos_));
        }
    }
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

json config_json(const OvidConfig& c) {
    return json{{"th_e_max", c.th_e_max},     {"n_pred", c.n_pred},
                {"n_head", c.n_head},         {"d_h", c.d_h},
                {"dropout", c.dropout},       {"lambda", c.lambda},
                {"th_class", c.th_class},     {"use_changeset", c.use_changeset},
                {"use_user", c.use_user},     {"use_edits", c.use_edits},
                {"seed", c.seed},             {"batch_size", c.batch_size},
                {"max_epochs", c.max_epochs}, {"patience", c.patience},
                {"learning_rate", c.learning_rate}};
}

OvidConfig config_from_json(const json& j) {
    OvidConfig c;
    c.th_e_max = j.at("th_e_max").get<std::size_t>();
    c.n_pred = j.at("n_pred").get<std::size_t>();
    c.n_head = j.at("n_head").get<std::size_t>();
    c.d_h = j.at("d_h").get<std::size_t>();
    c.dropout = j.at("dropout").get<double>();
    c.lambda = j.at("lambda").get<double>();
    c.th_class = j.at("th_class").get<double>();
    c.use_changeset = j.at("use_changeset").get<bool>();
    c.use_user = j.at("use_user").get<bool>();
    c.use_edits = j.at("use_edits").get<bool>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.batch_size = j.at("batch_size").get<std::size_t>();
    c.max_epochs = j.at("max_epochs").get<std::size_t>();
    c.patience = j.at("patience").get<std::size_t>();
    c.learning_rate = j.at("learning_rate").get<double>();
    return c;
}

void write_block(Writer& w, const NormBlock& b) {
    w.f64s(b.mean);
    w.f64s(b.std);
}

NormBlock read_block(Reader& r) {
    NormBlock b;
    b.mean = r.f64s();
    b.std = r.f64s();
    return b;
}

void write_bundle(Writer& w, const FeatureBundle& b) {
    w.u64(b.changeset);
    w.u8(static_cast<std::uint8_t>(b.label));
    w.u64(b.user);
    w.u8(b.part ? static_cast<std::uint8_t>(*b.part) : 0xff);
    w.u8(b.missing_history ? 1 : 0);
    w.f64s(b.x_c);
    w.f64s(b.x_u);
    w.u64(b.m_e.size());
    for (const auto& col : b.m_e) {
        w.f64s(col);
    }
}

FeatureBundle read_bundle(Reader& r) {
    FeatureBundle b;
    b.changeset = r.u64();
    b.label = r.u8() == 1 ? Label::Vandalism : Label::Regular;
    b.user = r.u64();
    if (const auto part = r.u8(); part <= 2) {
        b.part = static_cast<SplitPart>(part);
    }
    b.missing_history = r.u8() == 1;
    b.x_c = r.f64s();
    b.x_u = r.f64s();
    const auto n = r.u64();
    for (std::uint64_t i = 0; i < n; ++i) {
        b.m_e.push_back(r.f64s());
    }
    return b;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << v;
    return ss.str();
}

json log_json(const TrainingLog& log) {
    json epochs = json::array();
    for (const auto& e : log.epochs) {
        epochs.push_back({{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss},
                          {"improved", e.improved}});
    }
    return json{{"epochs", epochs},
                {"best_epoch", log.best_epoch},
                {"best_val_loss", std::isfinite(log.best_val_loss) ? json(log.best_val_loss) : json(nullptr)},
                {"stopped_epoch", log.stopped_epoch},
                {"early_stopped", log.early_stopped}};
}

TrainingLog log_from_json(const json& j) {
    TrainingLog log;
    for (const auto& e : j.at("epochs")) {
        log.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("train_loss").get<double>(),
                              e.at("val_loss").get<double>(), e.at("improved").get<bool>()});
    }
    log.best_epoch = j.at("best_epoch").get<std::size_t>();
    log.best_val_loss = j.at("best_val_loss").is_null() ? 0.0 : j.at("best_val_loss").get<double>();
    log.stopped_epoch = j.at("stopped_epoch").get<std::size_t>();
    log.early_stopped = j.at("early_stopped").get<bool>();
    return log;
}

std::uint32_t crc_of(std::string_view bytes) {
    uLong crc = crc32(0L, Z_NULL, 0);
    // zlib takes uInt lengths; feed in chunks.
    while (!bytes.empty()) {
        const auto n = static_cast<uInt>(std::min<std::size_t>(bytes.size(), 1u << 30));
        crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data()), n);
        bytes.remove_prefix(n);
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

double ModelCheckpoint::predict_raw(const FeatureBundle& raw) const {
    return model.predict(apply_norm(raw, norm));
}

void ModelCheckpoint::seal() {
    reference_predictions.clear();
    for (const auto& b : reference_batch) {
        reference_predictions.push_back(predict_raw(b));
    }
}

ModelCheckpoint make_checkpoint(OvidModel model, const FeatureFile& features, std::span<const FeatureBundle> raw,
                                std::size_t n_reference, TrainingLog log) {
    ModelCheckpoint cp;
    cp.model = std::move(model);
    cp.norm = features.norm;
    cp.editors = features.editors;
    cp.editor_hash = features.editor_hash;
    cp.top12 = features.top12;
    cp.log = std::move(log);
    for (std::size_t i = 0; i < raw.size() && i < n_reference; ++i) {
        cp.reference_batch.push_back(raw[i]);
    }
    cp.seal();
    return cp;
}

void write_checkpoint(const ModelCheckpoint& cp, std::ostream& out) {
    const auto params = cp.model.parameters();
    const auto& cfg = cp.model.config();
    const auto& dims = cp.model.dims();

    json meta;
    meta["config"] = config_json(cfg);
    meta["dims"] = {{"d_c", dims.d_c}, {"d_u", dims.d_u}, {"d_e", dims.d_e}};
    meta["editors"] = cp.editors;
    meta["editor_hash"] = hex64(cp.editor_hash);
    meta["top12_mode"] = cp.top12 == Top12Mode::Additions ? "additions" : "distinct";
    json plist = json::array();
    for (const auto* p : params) {
        plist.push_back({{"name", p->name}, {"rows", p->value.rows()}, {"cols", p->value.cols()},
                         {"regularized", p->regularized}});
    }
    meta["params"] = plist;
    meta["training"] = {{"loss", "binary cross-entropy + lambda * sum of squared weight matrices"},
                        {"optimizer", "adam"},
                        {"beta1", nn::AdamOptions{}.beta1},
                        {"beta2", nn::AdamOptions{}.beta2},
                        {"epsilon", nn::AdamOptions{}.epsilon},
                        {"init_relu", "uniform +-sqrt(6/fan_in)"},
                        {"init_linear", "uniform +-sqrt(6/(fan_in+fan_out))"},
                        {"dropout_placement", "after each prediction FC, before its layer norm"},
                        {"layer_norm_epsilon", nn::kLayerNormEpsilon}};
    meta["log"] = log_json(cp.log);

    Writer w;
    w.raw(std::string_view(kMagic, sizeof kMagic));
    w.u32(kCheckpointVersion);

    Writer m;
    m.raw(meta.dump());
    w.section(kMeta, m);

    Writer pw;
    for (const auto* p : params) {
        for (double v : p->value.values()) {
            pw.f64(v);
        }
    }
    w.section(kParams, pw);

    Writer nw;
    write_block(nw, cp.norm.changeset);
    write_block(nw, cp.norm.user);
    write_block(nw, cp.norm.edit);
    w.section(kNorm, nw);

    Writer rw;
    rw.u64(cp.reference_batch.size());
    for (const auto& b : cp.reference_batch) {
        write_bundle(rw, b);
    }
    rw.f64s(cp.reference_predictions);
    w.section(kReference, rw);

    Writer cw;
    cw.u32(crc_of(w.bytes()));
    w.section(kChecksum, cw);

    out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
    if (!out) {
        throw Error(ErrorCode::Io, "checkpoint write failed");
    }
}

void save_checkpoint(const ModelCheckpoint& cp, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    write_checkpoint(cp, out);
}

ModelCheckpoint read_checkpoint(std::istream& in) {
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(bytes, "checkpoint");
    if (bytes.size() < sizeof kMagic || std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
        throw Error(ErrorCode::Io, "not an ovid checkpoint");
    }
    r.take(sizeof kMagic);
    if (const auto version = r.u32(); version != kCheckpointVersion) {
        throw Error(ErrorCode::FormatVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                          ", this build reads version " +
                                                          std::to_string(kCheckpointVersion));
    }

    std::string_view meta_bytes, param_bytes, norm_bytes, ref_bytes;
    bool have_crc = false;
    while (!r.done()) {
        const std::size_t section_start = r.pos();
        const auto t = r.u32();
        const auto len = r.u64();
        const auto body = r.take(len);
        if (t == kMeta) {
            meta_bytes = body;
        } else if (t == kParams) {
            param_bytes = body;
        } else if (t == kNorm) {
            norm_bytes = body;
        } else if (t == kReference) {
            ref_bytes = body;
        } else if (t == kChecksum) {
            Reader cr(body, "checksum section");
            const auto stored = cr.u32();
            const auto actual = crc_of(std::string_view(bytes).substr(0, section_start));
            if (stored != actual) {
                throw Error(ErrorCode::ChecksumMismatch, "checkpoint checksum mismatch");
            }
            have_crc = true;
            if (!r.done()) {
                throw Error(ErrorCode::Io, "trailing bytes after the checksum section");
            }
        }
    }
    if (!have_crc) {
        throw Error(ErrorCode::Io, "checkpoint has no checksum section (truncated?)");
    }
    if (meta_bytes.empty() || ref_bytes.empty() || norm_bytes.empty()) {
        throw Error(ErrorCode::Io, "checkpoint is missing a required section");
    }

    ModelCheckpoint cp;
    try {
        const json meta = json::parse(meta_bytes);
        const OvidConfig cfg = config_from_json(meta.at("config"));
        const ModelDims dims{meta.at("dims").at("d_c").get<std::size_t>(), meta.at("dims").at("d_u").get<std::size_t>(),
                             meta.at("dims").at("d_e").get<std::size_t>()};
        cp.model = OvidModel(dims, cfg);
        cp.editors = meta.at("editors").get<std::vector<std::string>>();
        cp.editor_hash = std::stoull(meta.at("editor_hash").get<std::string>(), nullptr, 16);
        cp.top12 = meta.at("top12_mode").get<std::string>() == "distinct" ? Top12Mode::DistinctKeys
                                                                            : Top12Mode::Additions;
        cp.log = log_from_json(meta.at("log"));

        const auto params = cp.model.parameters();
        const auto& plist = meta.at("params");
        if (plist.size() != params.size()) {
            throw Error(ErrorCode::Io, "checkpoint lists " + std::to_string(plist.size()) + " parameters, model has " +
                                           std::to_string(params.size()));
        }
        Reader pr(param_bytes, "parameter section");
        for (std::size_t i = 0; i < params.size(); ++i) {
            auto* p = params[i];
            if (plist[i].at("name").get<std::string>() != p->name ||
                plist[i].at("rows").get<std::size_t>() != p->value.rows() ||
                plist[i].at("cols").get<std::size_t>() != p->value.cols()) {
                throw Error(ErrorCode::Io, "parameter " + std::to_string(i) + " does not match the architecture");
            }
            for (auto& v : p->value.values()) {
                v = pr.f64();
            }
        }
        if (!pr.done()) {
            throw Error(ErrorCode::Io, "parameter section has trailing bytes");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::Io, std::string("invalid checkpoint metadata: ") + e.what());
    }

    Reader nr(norm_bytes, "normalisation section");
    cp.norm.changeset = read_block(nr);
    cp.norm.user = read_block(nr);
    cp.norm.edit = read_block(nr);

    Reader rr(ref_bytes, "reference section");
    const auto n_ref = rr.u64();
    for (std::uint64_t i = 0; i < n_ref; ++i) {
        cp.reference_batch.push_back(read_bundle(rr));
    }
    cp.reference_predictions = rr.f64s();
    if (cp.reference_predictions.size() != cp.reference_batch.size()) {
        throw Error(ErrorCode::Io, "reference batch and stored predictions differ in length");
    }

    for (std::size_t i = 0; i < cp.reference_batch.size(); ++i) {
        const double got = cp.predict_raw(cp.reference_batch[i]);
        if (std::bit_cast<std::uint64_t>(got) != std::bit_cast<std::uint64_t>(cp.reference_predictions[i])) {
            throw Error(ErrorCode::ReferencePredictionMismatch,
                        "reference example " + std::to_string(i) + " (changeset " +
                            std::to_string(cp.reference_batch[i].changeset) + ") predicts " + std::to_string(got) +
                            ", checkpoint stores " + std::to_string(cp.reference_predictions[i]));
        }
    }
    return cp;
}

ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return read_checkpoint(in);
}

void check_compatible(const ModelCheckpoint& cp, const FeatureFile& features) {
    const auto& dims = cp.model.dims();
    if (features.d_c != dims.d_c || features.d_u != dims.d_u || features.d_e != dims.d_e) {
        throw Error(ErrorCode::DimMismatch,
                    "feature file has dimensions (" + std::to_string(features.d_c) + ", " +
                        std::to_string(features.d_u) + ", " + std::to_string(features.d_e) +
                        ") but the checkpoint expects (" + std::to_string(dims.d_c) + ", " +
                        std::to_string(dims.d_u) + ", " + std::to_string(dims.d_e) + ")");
    }
    if (features.editor_hash != cp.editor_hash) {
        throw Error(ErrorCode::DimMismatch, "feature file was built with a different editor vocabulary");
    }
}

} // namespace ovid

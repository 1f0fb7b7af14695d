#include "ovid/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "ovid/error.hpp"

namespace ovid {

namespace builtin {
extern const std::string_view kEditors;
extern const std::string_view kMapFeatures;
} // namespace builtin

using nlohmann::json;

namespace {

std::vector<std::string_view> data_lines(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        auto end = text.find('\n', pos);
        if (end == std::string_view::npos) {
            end = text.size();
        }
        auto line = text.substr(pos, end - pos);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (!line.empty() && line.front() != '#') {
            lines.push_back(line);
        }
        pos = end + 1;
    }
    return lines;
}

} // namespace

EditorVocabulary::EditorVocabulary(std::vector<std::string> prefixes) : prefixes_(std::move(prefixes)) {}

EditorVocabulary EditorVocabulary::parse(std::string_view text) {
    std::vector<std::string> prefixes;
    for (auto line : data_lines(text)) {
        prefixes.emplace_back(line);
    }
    return EditorVocabulary(std::move(prefixes));
}

const EditorVocabulary& EditorVocabulary::builtin() {
    static const EditorVocabulary vocab = parse(builtin::kEditors);
    return vocab;
}

std::size_t EditorVocabulary::index_of(const std::optional<std::string>& created_by) const {
    const std::size_t other = prefixes_.size();
    if (!created_by) {
        return other;
    }
    std::size_t best = other;
    std::size_t best_len = 0;
    for (std::size_t i = 0; i < prefixes_.size(); ++i) {
        const auto& p = prefixes_[i];
        if (p.size() > best_len && created_by->starts_with(p)) {
            best = i;
            best_len = p.size();
        }
    }
    return best;
}

std::vector<std::string> EditorVocabulary::names() const {
    auto out = prefixes_;
    out.emplace_back("other");
    return out;
}

std::uint64_t EditorVocabulary::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& name : names()) {
        for (unsigned char ch : name) {
            h = (h ^ ch) * 0x100000001b3ULL;
        }
        h = (h ^ 0xffU) * 0x100000001b3ULL;
    }
    return h;
}

MapFeatures MapFeatures::parse(std::string_view tsv) {
    MapFeatures mf;
    for (auto line : data_lines(tsv)) {
        const auto tab = line.find('\t');
        if (tab == std::string_view::npos) {
            throw Error(ErrorCode::InvalidArgument, "map-features row without a tab: " + std::string(line));
        }
        const auto key = line.substr(0, tab);
        const auto value = line.substr(tab + 1);
        if (value == "*") {
            mf.any_value_.emplace(key);
        } else {
            mf.pairs_.emplace(std::string(key), std::string(value));
        }
    }
    return mf;
}

const MapFeatures& MapFeatures::builtin() {
    static const MapFeatures mf = parse(builtin::kMapFeatures);
    return mf;
}

bool MapFeatures::is_valid(const std::string& key, const std::string& value) const {
    return any_value_.contains(key) || pairs_.contains(std::make_pair(key, value));
}

std::size_t MapFeatures::count_valid(const Tags& tags) const {
    std::size_t n = 0;
    for (const auto& [k, v] : tags) {
        n += is_valid(k, v) ? 1 : 0;
    }
    return n;
}

// ---------------------------------------------------------------------------

double days_since_2004(Timestamp t) {
    constexpr Timestamp kEpoch2004 = 1072915200; // 2004-01-01T00:00:00Z
    if (t <= kEpoch2004) {
        return 0.0;
    }
    return static_cast<double>((t - kEpoch2004) / 86400);
}

std::size_t utf8_length(std::string_view text) {
    std::size_t n = 0;
    for (unsigned char ch : text) {
        n += (ch & 0xC0U) != 0x80U ? 1 : 0;
    }
    return n;
}

std::vector<double> changeset_features(const Changeset& c, const FeatureConfig& config) {
    const auto& vocab = config.editors;
    std::vector<double> x(changeset_dim(vocab), 0.0);
    const auto counts = count_edits(c);
    x[slot::kCreates] = static_cast<double>(counts.creates);
    x[slot::kModifications] = static_cast<double>(counts.modifications);
    x[slot::kDeletes] = static_cast<double>(counts.deletes);
    x[slot::kEdits] = static_cast<double>(counts.total());
    if (const auto box = bounding_box(c)) {
        x[slot::kMinLat] = box->min_lat;
        x[slot::kMaxLat] = box->max_lat;
        x[slot::kMinLon] = box->min_lon;
        x[slot::kMaxLon] = box->max_lon;
        x[slot::kBboxSize] = (box->max_lat - box->min_lat) * (box->max_lon - box->min_lon);
    }
    x[slot::kEditorBegin + vocab.index_of(c.created_by)] = 1.0;
    const std::size_t tail = slot::kEditorBegin + vocab.size();
    x[tail] = (c.imagery_used && !c.imagery_used->empty()) ? 1.0 : 0.0;
    x[tail + 1] = static_cast<double>(utf8_length(c.comment));
    return x;
}

UserFeatureVector user_features(const Changeset& c, const UserHistoryIndex& history, const FeatureConfig& config) {
    const auto s = history.at(c.user, c.t);
    UserFeatureVector x{};
    x[slot::kPastCreates] = static_cast<double>(s.past_creates);
    x[slot::kPastModifications] = static_cast<double>(s.past_modifications);
    x[slot::kPastDeletes] = static_cast<double>(s.past_deletes);
    x[slot::kContributions] = static_cast<double>(s.contributions);
    x[slot::kTop12] =
        static_cast<double>(config.top12 == Top12Mode::Additions ? s.top12_additions : s.top12_distinct);
    x[slot::kAccountCreation] = s.account_created ? days_since_2004(*s.account_created) : 0.0;
    x[slot::kActiveWeeks] = static_cast<double>(s.active_weeks);
    return x;
}

EditFeatures edit_features(const Edit& e, const ChangesetStore& store, const FeatureConfig& config) {
    EditFeatures out;
    auto& x = out.values;
    const auto& valid = *config.map_features;
    x[slot::kTypeBegin + static_cast<std::size_t>(e.object.type)] = 1.0;
    x[slot::kOpBegin + static_cast<std::size_t>(e.op)] = 1.0;
    x[slot::kVersion] = static_cast<double>(e.ver);
    x[slot::kTagsTotal] = static_cast<double>(e.object.tags.size());
    x[slot::kValidTags] = static_cast<double>(valid.count_valid(e.object.tags));

    const ObjectKey key = object_identity(e.object);
    if (e.op == EditOp::Create) {
        x[slot::kTagsAdded] = static_cast<double>(e.object.tags.size());
        return out;
    }

    const auto* prev = store.previous_version(key, e.ver);
    if (prev == nullptr) {
        out.missing_history = true;
        return out;
    }

    std::set<UserId> authors;
    for (const auto& v : *store.history(key)) {
        if (v.ver < e.ver) {
            authors.insert(v.user);
        }
    }
    x[slot::kPreviousAuthors] = static_cast<double>(authors.size());
    x[slot::kTimeToPrevious] = static_cast<double>(std::max<Timestamp>(0, e.t - prev->t));

    static const Tags kNone;
    const Tags& after = e.op == EditOp::Delete ? kNone : e.object.tags;
    std::size_t added = 0;
    std::size_t removed = 0;
    for (const auto& [k, v] : after) {
        added += prev->tags.contains(k) ? 0 : 1;
    }
    for (const auto& [k, v] : prev->tags) {
        removed += after.contains(k) ? 0 : 1;
    }
    x[slot::kTagsAdded] = static_cast<double>(added);
    x[slot::kTagsDeleted] = static_cast<double>(removed);
    x[slot::kPreviousValidTags] = static_cast<double>(valid.count_valid(prev->tags));

    const auto before_name = prev->tags.find("name");
    const auto after_name = after.find("name");
    const bool had = before_name != prev->tags.end();
    const bool has = after_name != after.end();
    x[slot::kNameChanged] = (had != has || (had && has && before_name->second != after_name->second)) ? 1.0 : 0.0;
    return out;
}

EditMatrix edit_matrix(const Changeset& c, const ChangesetStore& store, const FeatureConfig& config) {
    EditMatrix m;
    m.columns.reserve(c.edits.size());
    for (const auto& e : c.edits) {
        auto f = edit_features(e, store, config);
        m.missing_history = m.missing_history || f.missing_history;
        m.columns.push_back(f.values);
    }
    return m;
}

FeatureBundle featurize(const Changeset& c, const ChangesetStore& store, const UserHistoryIndex& history,
                        const FeatureConfig& config) {
    FeatureBundle b;
    b.changeset = c.id;
    b.user = c.user;
    b.x_c = changeset_features(c, config);
    const auto xu = user_features(c, history, config);
    b.x_u.assign(xu.begin(), xu.end());
    auto m = edit_matrix(c, store, config);
    b.missing_history = m.missing_history;
    b.m_e.reserve(m.columns.size());
    for (const auto& col : m.columns) {
        b.m_e.emplace_back(col.begin(), col.end());
    }
    return b;
}

// ---------------------------------------------------------------------------

namespace {

struct RunningStats {
    std::vector<double> sum;
    std::vector<double> sum_sq;
    std::size_t n = 0;

    explicit RunningStats(std::size_t dim) : sum(dim, 0.0), sum_sq(dim, 0.0) {}

    void add(const std::vector<double>& x) {
        if (x.size() != sum.size()) {
            throw Error(ErrorCode::DimMismatch, "feature vector of dimension " + std::to_string(x.size()) +
                                                    ", expected " + std::to_string(sum.size()));
        }
        for (std::size_t i = 0; i < x.size(); ++i) {
            sum[i] += x[i];
        }
        ++n;
    }

    NormBlock finish(const std::vector<const std::vector<double>*>& rows) const {
        NormBlock block;
        block.mean.assign(sum.size(), 0.0);
        block.std.assign(sum.size(), 0.0);
        if (n == 0) {
            return block;
        }
        for (std::size_t i = 0; i < sum.size(); ++i) {
            block.mean[i] = sum[i] / static_cast<double>(n);
        }
        // Second pass for numerical stability.
        std::vector<double> var(sum.size(), 0.0);
        for (const auto* row : rows) {
            for (std::size_t i = 0; i < row->size(); ++i) {
                const double d = (*row)[i] - block.mean[i];
                var[i] += d * d;
            }
        }
        for (std::size_t i = 0; i < sum.size(); ++i) {
            block.std[i] = std::sqrt(var[i] / static_cast<double>(n));
        }
        return block;
    }
};

void normalize(std::vector<double>& x, const NormBlock& block) {
    if (x.size() != block.mean.size()) {
        throw Error(ErrorCode::DimMismatch, "feature vector of dimension " + std::to_string(x.size()) +
                                                " against normalisation of dimension " +
                                                std::to_string(block.mean.size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double centered = x[i] - block.mean[i];
        x[i] = block.std[i] > 0.0 ? centered / block.std[i] : centered;
    }
}

} // namespace

NormStats fit_norm(std::span<const FeatureBundle> train) {
    if (train.empty()) {
        throw Error(ErrorCode::EmptyTrainingSet, "cannot fit normalisation on an empty training split");
    }
    RunningStats c(train.front().x_c.size());
    RunningStats u(train.front().x_u.size());
    RunningStats e(kEditDim);
    std::vector<const std::vector<double>*> rows_c;
    std::vector<const std::vector<double>*> rows_u;
    std::vector<const std::vector<double>*> rows_e;
    for (const auto& b : train) {
        c.add(b.x_c);
        rows_c.push_back(&b.x_c);
        u.add(b.x_u);
        rows_u.push_back(&b.x_u);
        for (const auto& col : b.m_e) {
            e.add(col);
            rows_e.push_back(&col);
        }
    }
    return NormStats{c.finish(rows_c), u.finish(rows_u), e.finish(rows_e)};
}

FeatureBundle apply_norm(FeatureBundle bundle, const NormStats& stats) {
    normalize(bundle.x_c, stats.changeset);
    normalize(bundle.x_u, stats.user);
    for (auto& col : bundle.m_e) {
        normalize(col, stats.edit);
    }
    return bundle;
}

// ---------------------------------------------------------------------------

std::vector<FeatureBundle> FeatureFile::select(SplitPart part) const {
    std::vector<FeatureBundle> out;
    for (const auto& b : bundles) {
        if (b.part == part) {
            out.push_back(b);
        }
    }
    return out;
}

std::vector<FeatureBundle> FeatureFile::normalized(SplitPart part) const {
    auto out = select(part);
    for (auto& b : out) {
        b = apply_norm(std::move(b), norm);
    }
    return out;
}

FeatureFile build_feature_file(const ChangesetStore& store, const DatasetSplit& split, const FeatureConfig& config) {
    const auto history = UserHistoryIndex::build(store);
    FeatureFile file;
    file.d_c = changeset_dim(config.editors);
    file.editors = config.editors.names();
    file.editor_hash = config.editors.hash();
    file.top12 = config.top12;
    std::vector<FeatureBundle> train;
    for (auto part : {SplitPart::Train, SplitPart::Validation, SplitPart::Test}) {
        for (const auto& ex : split.part(part)) {
            const Changeset* c = store.find(ex.changeset);
            if (c == nullptr) {
                throw Error(ErrorCode::UnknownChangeset,
                            "changeset " + std::to_string(ex.changeset) + " is not in the store");
            }
            auto b = featurize(*c, store, history, config);
            b.label = ex.label;
            b.part = part;
            if (part == SplitPart::Train) {
                train.push_back(b);
            }
            file.bundles.push_back(std::move(b));
        }
    }
    file.norm = fit_norm(train);
    return file;
}

namespace {

json encode_block(const NormBlock& b) {
    return json{{"mean", b.mean}, {"std", b.std}};
}

NormBlock decode_block(const json& j) {
    return NormBlock{j.at("mean").get<std::vector<double>>(), j.at("std").get<std::vector<double>>()};
}

std::string hex64(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << v;
    return ss.str();
}

} // namespace

void write_features(const FeatureFile& file, std::ostream& out) {
    out << json{{"schema", "ovid-features"},
                {"version", kFeatureSchemaVersion},
                {"d_c", file.d_c},
                {"d_u", file.d_u},
                {"d_e", file.d_e},
                {"editors", file.editors},
                {"editor_hash", hex64(file.editor_hash)},
                {"top12_mode", file.top12 == Top12Mode::Additions ? "additions" : "distinct"}}
               .dump()
        << '\n';
    out << json{{"kind", "norm"},
                {"x_c", encode_block(file.norm.changeset)},
                {"x_u", encode_block(file.norm.user)},
                {"m_e", encode_block(file.norm.edit)}}
               .dump()
        << '\n';
    for (const auto& b : file.bundles) {
        json j{{"kind", "example"},
               {"changeset", b.changeset},
               {"label", b.label == Label::Vandalism ? 1 : 0},
               {"user", b.user},
               {"x_c", b.x_c},
               {"x_u", b.x_u},
               {"m_e", b.m_e},
               {"missing_history", b.missing_history}};
        if (b.part) {
            j["split"] = to_string(*b.part);
        }
        out << j.dump() << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::Io, "write failed");
    }
}

void save_features(const FeatureFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    write_features(file, out);
}

FeatureFile load_features(std::istream& in) {
    FeatureFile file;
    std::string line;
    std::size_t line_no = 0;
    try {
        if (!std::getline(in, line)) {
            throw Error(ErrorCode::Io, "empty feature file");
        }
        ++line_no;
        const json header = json::parse(line);
        if (header.value("schema", "") != "ovid-features") {
            throw Error(ErrorCode::Io, "not an ovid feature file");
        }
        if (header.value("version", -1) != kFeatureSchemaVersion) {
            throw Error(ErrorCode::SchemaVersionMismatch, "feature schema version " + header.at("version").dump());
        }
        file.d_c = header.at("d_c").get<std::size_t>();
        file.d_u = header.at("d_u").get<std::size_t>();
        file.d_e = header.at("d_e").get<std::size_t>();
        file.editors = header.at("editors").get<std::vector<std::string>>();
        file.editor_hash = std::stoull(header.at("editor_hash").get<std::string>(), nullptr, 16);
        file.top12 = header.at("top12_mode").get<std::string>() == "distinct" ? Top12Mode::DistinctKeys
                                                                                : Top12Mode::Additions;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            const json j = json::parse(line);
            const auto kind = j.at("kind").get<std::string>();
            if (kind == "norm") {
                file.norm = NormStats{decode_block(j.at("x_c")), decode_block(j.at("x_u")), decode_block(j.at("m_e"))};
                continue;
            }
            FeatureBundle b;
            b.changeset = j.at("changeset").get<ChangesetId>();
            b.label = j.at("label").get<int>() == 1 ? Label::Vandalism : Label::Regular;
            b.user = j.at("user").get<UserId>();
            b.x_c = j.at("x_c").get<std::vector<double>>();
            b.x_u = j.at("x_u").get<std::vector<double>>();
            b.m_e = j.at("m_e").get<std::vector<std::vector<double>>>();
            b.missing_history = j.at("missing_history").get<bool>();
            if (j.contains("split")) {
                b.part = parse_split_part(j.at("split").get<std::string>());
            }
            if (b.x_c.size() != file.d_c || b.x_u.size() != file.d_u) {
                throw Error(ErrorCode::DimMismatch, "example for changeset " + std::to_string(b.changeset) +
                                                        " does not match the header dimensions");
            }
            file.bundles.push_back(std::move(b));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, "invalid feature record at line " + std::to_string(line_no) + ": " + e.what());
    }
    return file;
}

FeatureFile load_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return load_features(in);
}

} // namespace ovid

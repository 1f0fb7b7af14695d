#include "ovid/miner.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"

#include "ovid/error.hpp"
#include "ovid/rng.hpp"

namespace ovid {

using nlohmann::json;

namespace {

std::string ascii_lower(std::string_view text) {
    std::string out(text);
    for (auto& ch : out) {
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    }
    return out;
}

bool is_alnum(char ch) {
    return std::isalnum(static_cast<unsigned char>(ch)) != 0;
}

bool is_digit(char ch) {
    return ch >= '0' && ch <= '9';
}

} // namespace

bool mentions_vandalism(std::string_view comment) {
    return ascii_lower(comment).find("vandalism") != std::string::npos;
}

std::vector<const Changeset*> find_vandalism_reverts(const ChangesetStore& store) {
    std::vector<const Changeset*> reverts;
    for (const auto& c : store.changesets()) {
        if (mentions_vandalism(c.comment)) {
            reverts.push_back(&c);
        }
    }
    std::sort(reverts.begin(), reverts.end(), [](const Changeset* a, const Changeset* b) { return a->id < b->id; });
    return reverts;
}

std::vector<ChangesetId> extract_changeset_ids(std::string_view comment) {
    const std::string text = ascii_lower(comment);
    constexpr std::string_view token = "changeset";
    std::vector<ChangesetId> ids;

    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        const bool left_boundary = pos == 0 || !is_alnum(text[pos - 1]);
        std::size_t i = pos + token.size();
        pos = i;
        if (!left_boundary) {
            continue;
        }
        if (i < text.size() && text[i] == 's') {
            ++i;
        }
        if (i < text.size() && is_alnum(text[i])) {
            continue;
        }
        for (;;) {
            while (i < text.size()) {
                const char ch = text[i];
                if (std::isspace(static_cast<unsigned char>(ch)) || ch == ',' || ch == '#' || ch == ':' ||
                    ch == '/') {
                    ++i;
                } else if (text.compare(i, 3, "and") == 0 && (i + 3 == text.size() || !is_alnum(text[i + 3]))) {
                    i += 3;
                } else {
                    break;
                }
            }
            if (i >= text.size() || !is_digit(text[i])) {
                break;
            }
            const std::size_t start = i;
            while (i < text.size() && is_digit(text[i])) {
                ++i;
            }
            if (i < text.size() && std::isalpha(static_cast<unsigned char>(text[i]))) {
                break;
            }
            ChangesetId id = 0;
            auto [ptr, ec] = std::from_chars(text.data() + start, text.data() + i, id);
            if (ec == std::errc{}) {
                ids.push_back(id);
            }
        }
        pos = i;
    }
    return ids;
}

std::set<ChangesetId> attribute_explicit(const Changeset& revert, const ChangesetStore& store) {
    std::set<ChangesetId> out;
    for (auto id : extract_changeset_ids(revert.comment)) {
        if (id == revert.id) {
            continue;
        }
        const auto* c = store.find(id);
        if (c != nullptr && c->user != revert.user) {
            out.insert(id);
        }
    }
    return out;
}

std::map<ChangesetId, ObjectKey> attribute_by_deletion_detailed(const Changeset& revert,
                                                                const ChangesetStore& store) {
    std::map<ChangesetId, ObjectKey> out;
    for (const auto& edit : revert.edits) {
        if (edit.op != EditOp::Delete) {
            continue;
        }
        const ObjectKey key = object_identity(edit.object);
        const auto* versions = store.history(key);
        if (versions == nullptr) {
            continue;
        }
        std::set<UserId> authors;
        std::vector<ChangesetId> contributing;
        for (const auto& v : *versions) {
            if (v.ver >= edit.ver || v.changeset == revert.id || v.user == revert.user) {
                continue;
            }
            authors.insert(v.user);
            contributing.push_back(v.changeset);
        }
        if (authors.size() != 1) {
            continue;
        }
        for (auto id : contributing) {
            const auto* c = store.find(id);
            if (c != nullptr && c->user != revert.user) {
                out.emplace(id, key);
            }
        }
    }
    return out;
}

std::set<ChangesetId> attribute_by_deletion(const Changeset& revert, const ChangesetStore& store) {
    std::set<ChangesetId> out;
    for (const auto& [id, key] : attribute_by_deletion_detailed(revert, store)) {
        out.insert(id);
    }
    return out;
}

std::vector<LabeledExample> sample_negatives(const ChangesetStore& store, const std::set<ChangesetId>& exclude,
                                             std::size_t n, std::uint64_t seed) {
    std::set<ChangesetId> blocked = exclude;
    for (const auto* r : find_vandalism_reverts(store)) {
        blocked.insert(r->id);
    }
    std::vector<const Changeset*> population;
    for (const auto& c : store.changesets()) {
        if (!blocked.contains(c.id)) {
            population.push_back(&c);
        }
    }
    if (population.size() < n) {
        throw Error(ErrorCode::InsufficientPopulation, "need " + std::to_string(n) + " negatives but only " +
                                                           std::to_string(population.size()) + " candidates remain");
    }
    std::sort(population.begin(), population.end(),
              [](const Changeset* a, const Changeset* b) { return a->id < b->id; });

    Rng rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        const auto j = i + static_cast<std::size_t>(uniform_index(rng, population.size() - i));
        std::swap(population[i], population[j]);
    }
    population.resize(n);
    std::sort(population.begin(), population.end(),
              [](const Changeset* a, const Changeset* b) { return a->id < b->id; });

    std::vector<LabeledExample> out;
    out.reserve(n);
    for (const auto* c : population) {
        out.push_back(LabeledExample{c->id, Label::Regular, Provenance{ProvenanceKind::NegativeSample}, c->user});
    }
    return out;
}

MineResult mine(const ChangesetStore& store, std::uint64_t seed) {
    MineResult result;
    const auto reverts = find_vandalism_reverts(store);
    std::set<ChangesetId> revert_ids;
    for (const auto* r : reverts) {
        revert_ids.insert(r->id);
        result.reverts.push_back(r->id);
    }

    std::map<ChangesetId, Provenance> positives;
    for (const auto* r : reverts) {
        const auto explicit_ids = attribute_explicit(*r, store);
        if (!explicit_ids.empty()) {
            for (auto id : explicit_ids) {
                positives.emplace(id, Provenance{ProvenanceKind::ExplicitMention, r->id, std::nullopt});
            }
            continue;
        }
        for (const auto& [id, key] : attribute_by_deletion_detailed(*r, store)) {
            positives.emplace(id, Provenance{ProvenanceKind::DeletionAttribution, r->id, key});
        }
    }

    std::set<ChangesetId> exclude = revert_ids;
    for (const auto& [id, provenance] : positives) {
        if (revert_ids.contains(id)) {
            continue;
        }
        exclude.insert(id);
        const auto* c = store.find(id);
        result.examples.push_back(LabeledExample{id, Label::Vandalism, provenance, c->user});
        if (provenance.kind == ProvenanceKind::ExplicitMention) {
            ++result.explicit_positives;
        } else {
            ++result.deletion_positives;
        }
    }

    auto negatives = sample_negatives(store, exclude, result.examples.size(), seed);
    result.examples.insert(result.examples.end(), negatives.begin(), negatives.end());
    return result;
}

// ---------------------------------------------------------------------------

std::string_view to_string(SplitPart part) noexcept {
    switch (part) {
    case SplitPart::Train: return "train";
    case SplitPart::Validation: return "validation";
    case SplitPart::Test: return "test";
    }
    return "train";
}

std::optional<SplitPart> parse_split_part(std::string_view text) noexcept {
    if (text == "train") return SplitPart::Train;
    if (text == "validation" || text == "val") return SplitPart::Validation;
    if (text == "test") return SplitPart::Test;
    return std::nullopt;
}

const std::vector<LabeledExample>& DatasetSplit::part(SplitPart p) const {
    switch (p) {
    case SplitPart::Train: return train;
    case SplitPart::Validation: return validation;
    case SplitPart::Test: return test;
    }
    return train;
}

std::vector<LabeledExample>& DatasetSplit::part(SplitPart p) {
    return const_cast<std::vector<LabeledExample>&>(std::as_const(*this).part(p));
}

DatasetSplit split_user_disjoint(const std::vector<LabeledExample>& examples, SplitRatios ratios,
                                 std::uint64_t seed) {
    const auto targets_ratio = ratios.as_array();
    const double sum = targets_ratio[0] + targets_ratio[1] + targets_ratio[2];
    if (std::abs(sum - 1.0) > 1e-9 || targets_ratio[0] < 0 || targets_ratio[1] < 0 || targets_ratio[2] < 0) {
        throw Error(ErrorCode::InvalidArgument, "split ratios must be non-negative and sum to 1");
    }

    std::map<UserId, std::size_t> per_user;
    for (const auto& e : examples) {
        ++per_user[e.user];
    }
    std::vector<UserId> users;
    users.reserve(per_user.size());
    for (const auto& [u, n] : per_user) {
        users.push_back(u);
    }
    Rng rng(seed);
    shuffle(std::span<UserId>(users), rng);

    const auto total = static_cast<double>(examples.size());
    std::array<double, 3> assigned{0.0, 0.0, 0.0};
    std::unordered_map<UserId, SplitPart> owner;
    for (auto u : users) {
        std::size_t best = 0;
        double best_deficit = targets_ratio[0] * total - assigned[0];
        for (std::size_t k = 1; k < 3; ++k) {
            const double deficit = targets_ratio[k] * total - assigned[k];
            if (deficit > best_deficit) {
                best = k;
                best_deficit = deficit;
            }
        }
        assigned[best] += static_cast<double>(per_user[u]);
        owner.emplace(u, static_cast<SplitPart>(best));
    }

    DatasetSplit split;
    split.ratios = ratios;
    split.seed = seed;
    for (const auto& e : examples) {
        split.part(owner.at(e.user)).push_back(e);
    }
    return split;
}

// ---------------------------------------------------------------------------

namespace {

json encode_provenance(const Provenance& p) {
    json j;
    switch (p.kind) {
    case ProvenanceKind::ExplicitMention: j["kind"] = "explicit"; break;
    case ProvenanceKind::DeletionAttribution: j["kind"] = "deletion"; break;
    case ProvenanceKind::NegativeSample: j["kind"] = "negative"; break;
    case ProvenanceKind::Imported: j["kind"] = "imported"; break;
    }
    if (p.revert) {
        j["revert"] = *p.revert;
    }
    if (p.object) {
        j["object"] = json{{"type", to_string(p.object->type)}, {"id", p.object->id}};
    }
    return j;
}

Provenance decode_provenance(const json& j) {
    Provenance p;
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "explicit") {
        p.kind = ProvenanceKind::ExplicitMention;
    } else if (kind == "deletion") {
        p.kind = ProvenanceKind::DeletionAttribution;
    } else if (kind == "negative") {
        p.kind = ProvenanceKind::NegativeSample;
    } else if (kind == "imported") {
        p.kind = ProvenanceKind::Imported;
    } else {
        throw Error(ErrorCode::Io, "unknown provenance kind '" + kind + "'");
    }
    if (j.contains("revert")) {
        p.revert = j.at("revert").get<ChangesetId>();
    }
    if (j.contains("object")) {
        const auto type = parse_object_type(j.at("object").at("type").get<std::string>());
        if (!type) {
            throw Error(ErrorCode::Io, "unknown object type in provenance");
        }
        p.object = ObjectKey{j.at("object").at("id").get<std::uint64_t>(), *type};
    }
    return p;
}

} // namespace

void write_dataset(const DatasetFile& file, std::ostream& out) {
    std::size_t positives = 0;
    std::array<std::size_t, 3> per_part{0, 0, 0};
    for (std::size_t i = 0; i < file.examples.size(); ++i) {
        positives += file.examples[i].label == Label::Vandalism ? 1 : 0;
        if (i < file.parts.size() && file.parts[i]) {
            ++per_part[static_cast<std::size_t>(*file.parts[i])];
        }
    }
    json header{{"schema", "ovid-dataset"},
                {"version", kDatasetSchemaVersion},
                {"seed", file.seed ? json(*file.seed) : json(nullptr)},
                {"ratios", file.ratios ? json(file.ratios->as_array()) : json(nullptr)},
                {"counts",
                 json{{"total", file.examples.size()},
                      {"vandalism", positives},
                      {"regular", file.examples.size() - positives}}}};
    if (file.ratios) {
        header["counts"]["train"] = per_part[0];
        header["counts"]["validation"] = per_part[1];
        header["counts"]["test"] = per_part[2];
    }
    out << header.dump() << '\n';
    for (std::size_t i = 0; i < file.examples.size(); ++i) {
        const auto& e = file.examples[i];
        json j{{"changeset", e.changeset},
               {"label", e.label == Label::Vandalism ? "vandalism" : "regular"},
               {"provenance", encode_provenance(e.provenance)},
               {"user", e.user}};
        if (i < file.parts.size() && file.parts[i]) {
            j["split"] = to_string(*file.parts[i]);
        }
        out << j.dump() << '\n';
    }
    if (!out) {
        throw Error(ErrorCode::Io, "write failed");
    }
}

namespace {

void write_dataset_file(const DatasetFile& file, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
    }
    write_dataset(file, out);
}

} // namespace

void save_dataset(const std::vector<LabeledExample>& examples, std::optional<std::uint64_t> seed,
                  const std::filesystem::path& path) {
    DatasetFile file;
    file.examples = examples;
    file.seed = seed;
    write_dataset_file(file, path);
}

void save_split(const DatasetSplit& split, const std::filesystem::path& path) {
    DatasetFile file;
    file.seed = split.seed;
    file.ratios = split.ratios;
    for (auto p : {SplitPart::Train, SplitPart::Validation, SplitPart::Test}) {
        for (const auto& e : split.part(p)) {
            file.examples.push_back(e);
            file.parts.push_back(p);
        }
    }
    write_dataset_file(file, path);
}

DatasetFile load_dataset(std::istream& in) {
    std::string line;
    std::size_t line_no = 1;
    if (!std::getline(in, line)) {
        throw Error(ErrorCode::Io, "empty dataset file");
    }
    DatasetFile file;
    try {
        const json header = json::parse(line);
        if (header.value("schema", "") != "ovid-dataset") {
            throw Error(ErrorCode::Io, "not an ovid dataset file");
        }
        if (header.value("version", -1) != kDatasetSchemaVersion) {
            throw Error(ErrorCode::SchemaVersionMismatch, "dataset schema version " + header.at("version").dump());
        }
        if (!header.at("seed").is_null()) {
            file.seed = header.at("seed").get<std::uint64_t>();
        }
        if (!header.at("ratios").is_null()) {
            const auto r = header.at("ratios").get<std::array<double, 3>>();
            file.ratios = SplitRatios{r[0], r[1], r[2]};
        }
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) {
                continue;
            }
            const json j = json::parse(line);
            LabeledExample e;
            e.changeset = j.at("changeset").get<ChangesetId>();
            e.label = j.at("label").get<std::string>() == "vandalism" ? Label::Vandalism : Label::Regular;
            e.provenance = decode_provenance(j.at("provenance"));
            e.user = j.at("user").get<UserId>();
            file.examples.push_back(e);
            std::optional<SplitPart> part;
            if (j.contains("split")) {
                part = parse_split_part(j.at("split").get<std::string>());
            }
            file.parts.push_back(part);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::Io, "invalid dataset record at line " + std::to_string(line_no) + ": " + e.what());
    }
    return file;
}

DatasetFile load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    return load_dataset(in);
}

DatasetSplit to_split(const DatasetFile& file) {
    DatasetSplit split;
    split.ratios = file.ratios.value_or(SplitRatios{});
    split.seed = file.seed.value_or(0);
    for (std::size_t i = 0; i < file.examples.size(); ++i) {
        const auto part = i < file.parts.size() ? file.parts[i] : std::nullopt;
        if (!part) {
            throw Error(ErrorCode::Io, "dataset record for changeset " + std::to_string(file.examples[i].changeset) +
                                           " has no split assignment");
        }
        split.part(*part).push_back(file.examples[i]);
    }
    return split;
}

std::vector<LabeledExample> import_labels_csv(std::istream& in, const ChangesetStore* store) {
    std::vector<LabeledExample> out;
    std::string line;
    std::size_t line_no = 0;
    std::set<ChangesetId> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        ChangesetId id = 0;
        if (cells.size() < 2 || std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), id).ec != std::errc{}) {
            if (line_no == 1) {
                continue; // header row
            }
            throw Error(ErrorCode::Io, "bad label row at line " + std::to_string(line_no));
        }
        const std::string label = ascii_lower(cells[1]);
        LabeledExample e;
        e.changeset = id;
        if (label == "1" || label == "true" || label == "vandalism") {
            e.label = Label::Vandalism;
            e.provenance = Provenance{ProvenanceKind::Imported};
        } else if (label == "0" || label == "false" || label == "regular") {
            e.label = Label::Regular;
            e.provenance = Provenance{ProvenanceKind::NegativeSample};
        } else {
            throw Error(ErrorCode::Io, "bad label '" + cells[1] + "' at line " + std::to_string(line_no));
        }
        if (cells.size() >= 3 && !cells[2].empty()) {
            std::from_chars(cells[2].data(), cells[2].data() + cells[2].size(), e.user);
        } else if (store != nullptr) {
            if (const auto* c = store->find(id)) {
                e.user = c->user;
            }
        }
        if (seen.insert(id).second) {
            out.push_back(e);
        }
    }
    return out;
}

} // namespace ovid

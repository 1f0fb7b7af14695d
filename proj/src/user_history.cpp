#include "ovid/user_history.hpp"

#include <algorithm>
#include <map>

namespace ovid {

int top12_index(std::string_view key) noexcept {
    for (std::size_t i = 0; i < kTop12Keys.size(); ++i) {
        if (kTop12Keys[i] == key) {
            return static_cast<int>(i);
        }
    }
    return -1;
}

std::vector<std::string_view> added_keys(const Tags& before, const Tags& after) {
    std::vector<std::string_view> keys;
    for (const auto& [k, v] : after) {
        if (!before.contains(k)) {
            keys.push_back(k);
        }
    }
    return keys;
}

namespace {

std::size_t count_before(const std::vector<Timestamp>& sorted, Timestamp t) {
    return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), t) - sorted.begin());
}

} // namespace

UserSnapshot UserHistory::at(Timestamp t) const {
    UserSnapshot s;
    s.past_creates = count_before(creates_, t);
    s.past_modifications = count_before(modifications_, t);
    s.past_deletes = count_before(deletes_, t);
    s.contributions = s.past_creates + s.past_modifications + s.past_deletes;
    s.top12_additions = count_before(top12_additions_, t);
    for (const auto& first : top12_first_) {
        if (first && *first < t) {
            ++s.top12_distinct;
        }
    }
    s.active_weeks = count_before(week_starts_, t);
    if (registered_) {
        s.account_created = registered_;
    } else if (!changeset_times_.empty() && changeset_times_.front() < t) {
        s.account_created = changeset_times_.front();
    }
    return s;
}

UserHistoryIndex UserHistoryIndex::build(const ChangesetStore& store) {
    UserHistoryIndex index;
    std::unordered_map<UserId, std::map<int, Timestamp>> weeks;
    static const Tags kEmpty;

    for (const auto& c : store.changesets()) {
        auto& h = index.users_[c.user];
        h.changeset_times_.push_back(c.t);
        auto [it, inserted] = weeks[c.user].emplace(iso_week_key(c.t), c.t);
        if (!inserted) {
            it->second = std::min(it->second, c.t);
        }
        for (const auto& e : c.edits) {
            switch (e.op) {
            case EditOp::Create: h.creates_.push_back(e.t); break;
            case EditOp::Modify: h.modifications_.push_back(e.t); break;
            case EditOp::Delete: h.deletes_.push_back(e.t); break;
            }
            if (e.op == EditOp::Delete) {
                continue;
            }
            const auto* prev = store.previous_version(object_identity(e.object), e.ver);
            const Tags& before = (e.op == EditOp::Create || prev == nullptr) ? kEmpty : prev->tags;
            for (auto key : added_keys(before, e.object.tags)) {
                const int idx = top12_index(key);
                if (idx < 0) {
                    continue;
                }
                h.top12_additions_.push_back(e.t);
                auto& first = h.top12_first_[static_cast<std::size_t>(idx)];
                if (!first || e.t < *first) {
                    first = e.t;
                }
            }
        }
    }

    for (auto& [user, h] : index.users_) {
        std::sort(h.creates_.begin(), h.creates_.end());
        std::sort(h.modifications_.begin(), h.modifications_.end());
        std::sort(h.deletes_.begin(), h.deletes_.end());
        std::sort(h.top12_additions_.begin(), h.top12_additions_.end());
        std::sort(h.changeset_times_.begin(), h.changeset_times_.end());
        for (const auto& [week, start] : weeks[user]) {
            h.week_starts_.push_back(start);
        }
        std::sort(h.week_starts_.begin(), h.week_starts_.end());
    }
    return index;
}

void UserHistoryIndex::set_account_created(UserId user, Timestamp created) {
    users_[user].registered_ = created;
}

UserSnapshot UserHistoryIndex::at(UserId user, Timestamp t) const {
    auto it = users_.find(user);
    if (it == users_.end()) {
        return {};
    }
    return it->second.at(t);
}

} // namespace ovid

#include "recdemand/types.hpp"

#include <algorithm>
#include <unordered_set>

namespace recdemand {

std::string slot_name(int slot) {
    switch (slot) {
        case slot::kBillboard: return "bb";
        case slot::kTop25: return "t25";
        case slot::kTop100: return "t100";
        default: return "s" + std::to_string(slot);
    }
}

int slot_from_name(const std::string& name) {
    if (name == "bb") return slot::kBillboard;
    if (name == "t25") return slot::kTop25;
    if (name == "t100") return slot::kTop100;
    if (name.size() > 1 && name[0] == 's') {
        try {
            int s = std::stoi(name.substr(1));
            if (s >= 0) return s;
        } catch (const std::exception&) {
        }
    }
    throw ValidationError("unknown slot name: " + name);
}

Catalog::Catalog(std::vector<GoodId> goods, int embedding_dim)
    : goods_(std::move(goods)), dim_(embedding_dim) {
    if (dim_ <= 0) throw ValidationError("embedding dimension must be positive");
    index_.reserve(goods_.size());
    for (int i = 0; i < static_cast<int>(goods_.size()); ++i) {
        GoodId id = goods_[i];
        if (id == kOutsideGood) throw ValidationError("good id 0 is reserved for the outside option");
        if (!index_.emplace(id, i).second)
            throw ValidationError("duplicate good id in catalog: " + std::to_string(id));
    }
}

int Catalog::index_of(GoodId id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("good not in catalog: " + std::to_string(id));
    return it->second;
}

int Catalog::find(GoodId id) const {
    auto it = index_.find(id);
    return it == index_.end() ? -1 : it->second;
}

GoodId Catalog::id_at(int index) const {
    if (index < 0 || index >= size()) throw ValidationError("catalog index out of range");
    return goods_[index];
}

RecommendationPage RecommendationPage::empty(const std::vector<int>& capacities) {
    RecommendationPage page;
    page.capacities = capacities;
    page.slots.assign(capacities.size(), {});
    return page;
}

int RecommendationPage::total_goods() const {
    int n = 0;
    for (const auto& s : slots) n += static_cast<int>(s.size());
    return n;
}

int RecommendationPage::slot_of(GoodId id) const {
    for (int r = 0; r < slot_count(); ++r)
        if (std::find(slots[r].begin(), slots[r].end(), id) != slots[r].end()) return r;
    return -1;
}

void RecommendationPage::validate(const Catalog& catalog) const {
    if (slots.size() != capacities.size())
        throw ValidationError("page slot/capacity count mismatch");
    std::unordered_set<GoodId> seen;
    for (int r = 0; r < slot_count(); ++r) {
        if (capacities[r] < 0) throw ValidationError("negative slot capacity");
        if (static_cast<int>(slots[r].size()) > capacities[r])
            throw ValidationError("slot " + slot_name(r) + " exceeds its capacity");
        for (GoodId id : slots[r]) {
            if (!catalog.contains(id))
                throw ValidationError("page contains unknown good: " + std::to_string(id));
            if (!seen.insert(id).second)
                throw ValidationError("good appears in two slots: " + std::to_string(id));
        }
    }
}

void UserHistory::push(int period, GoodId good) {
    if (!entries.empty() && period <= entries.back().period)
        throw ValidationError("history periods must be strictly increasing");
    entries.push_back({period, good});
    if (max_len > 0 && static_cast<int>(entries.size()) > max_len)
        entries.erase(entries.begin());
}

}  // namespace recdemand

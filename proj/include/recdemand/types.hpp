#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace recdemand {

using GoodId = std::int32_t;
using UserId = std::int32_t;

// Id 0 denotes the outside option (no consumption) and never names a catalog good.
inline constexpr GoodId kOutsideGood = 0;

// Invalid input, malformed file, inconsistent configuration. CLI exit code 1.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// NaN/overflow or a diverged optimization. CLI exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Page locations, ordered by salience. The first three are the homepage
// canvases; pages may be configured with additional locations.
namespace slot {
inline constexpr int kBillboard = 0;
inline constexpr int kTop25 = 1;
inline constexpr int kTop100 = 2;
}  // namespace slot

std::string slot_name(int slot);
int slot_from_name(const std::string& name);

// The set of goods on the platform plus the embedding dimension of the model
// that scores them. Rows of all per-good matrices follow this ordering.
class Catalog {
public:
    Catalog() = default;
    Catalog(std::vector<GoodId> goods, int embedding_dim);

    int size() const { return static_cast<int>(goods_.size()); }
    int embedding_dim() const { return dim_; }
    const std::vector<GoodId>& goods() const { return goods_; }

    bool contains(GoodId id) const { return index_.count(id) != 0; }
    // Row index for a good; throws ValidationError for unknown ids.
    int index_of(GoodId id) const;
    // Row index or -1 when absent.
    int find(GoodId id) const;
    GoodId id_at(int index) const;

private:
    std::vector<GoodId> goods_;
    std::unordered_map<GoodId, int> index_;
    int dim_ = 0;
};

// The slotted set of recommendations one user sees on one day.
struct RecommendationPage {
    std::vector<std::vector<GoodId>> slots;  // slot -> goods shown there
    std::vector<int> capacities;             // per-slot capacity

    static RecommendationPage empty(const std::vector<int>& capacities);

    int slot_count() const { return static_cast<int>(slots.size()); }
    int total_goods() const;
    bool contains(GoodId id) const { return slot_of(id) >= 0; }
    // Slot holding the good, or -1.
    int slot_of(GoodId id) const;

    // Checks capacities, cross-slot uniqueness, and catalog membership.
    void validate(const Catalog& catalog) const;
};

struct HistoryEntry {
    int period = 0;
    GoodId good = kOutsideGood;
};

// Watch history of one user: periods strictly increasing, truncated to the
// most recent max_len entries.
struct UserHistory {
    std::vector<HistoryEntry> entries;
    int max_len = 0;

    explicit UserHistory(int max_len_ = 0) : max_len(max_len_) {}

    void push(int period, GoodId good);
    bool empty() const { return entries.empty(); }
    int size() const { return static_cast<int>(entries.size()); }
};

// One user-day observation: the page shown and the choice made.
struct ChoiceEvent {
    UserId user = 0;
    int period = 0;
    RecommendationPage page;
    GoodId choice = kOutsideGood;  // kOutsideGood = no consumption

    bool chose_inside() const { return choice != kOutsideGood; }
};

}  // namespace recdemand

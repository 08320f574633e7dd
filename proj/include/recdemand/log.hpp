#pragma once

#include <span>
#include <string>
#include <vector>

#include "recdemand/types.hpp"

namespace recdemand {

// Panel of choice events. Events for one user must have distinct periods;
// canonical order (user ascending, period ascending) is established by
// PanelIndex, so the container itself may hold events in any order.
struct InteractionLog {
    std::vector<ChoiceEvent> events;
    std::string arm_id;  // experiment arm that produced this log, "" if none

    std::size_t size() const { return events.size(); }
    bool empty() const { return events.empty(); }
};

// Per-event view with the resolved watch history window.
struct EventRef {
    int event = 0;       // index into the canonically ordered event list
    int hist_begin = 0;  // [hist_begin, hist_end) into the watch stream
    int hist_end = 0;
};

// Canonical ordering plus O(1) history reconstruction for every event.
// The watch stream concatenates each user's inside choices in period order
// as catalog row indices; an event's history window is the slice of that
// stream written before the event.
class PanelIndex {
public:
    PanelIndex() = default;
    PanelIndex(const InteractionLog& log, const Catalog& catalog);

    const std::vector<EventRef>& refs() const { return refs_; }
    const ChoiceEvent& event(const EventRef& ref) const { return (*events_)[order_[ref.event]]; }

    // Most recent <= max_len history rows, oldest first.
    std::span<const int> history(const EventRef& ref, int max_len) const {
        int len = ref.hist_end - ref.hist_begin;
        int take = len < max_len ? len : max_len;
        return {watch_stream_.data() + (ref.hist_end - take), static_cast<std::size_t>(take)};
    }

    // Full history window (no cap), oldest first.
    std::span<const int> full_history(const EventRef& ref) const {
        return {watch_stream_.data() + ref.hist_begin,
                static_cast<std::size_t>(ref.hist_end - ref.hist_begin)};
    }

    int n_users() const { return n_users_; }

private:
    const std::vector<ChoiceEvent>* events_ = nullptr;
    std::vector<int> order_;  // canonical position -> original event index
    std::vector<int> watch_stream_;
    std::vector<EventRef> refs_;
    int n_users_ = 0;
};

}  // namespace recdemand

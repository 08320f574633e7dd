#include "recdemand/log.hpp"

#include <algorithm>
#include <numeric>
#include <unordered_set>

namespace recdemand {

PanelIndex::PanelIndex(const InteractionLog& log, const Catalog& catalog) : events_(&log.events) {
    const auto& events = log.events;
    order_.resize(events.size());
    std::iota(order_.begin(), order_.end(), 0);
    std::sort(order_.begin(), order_.end(), [&](int a, int b) {
        if (events[a].user != events[b].user) return events[a].user < events[b].user;
        return events[a].period < events[b].period;
    });

    refs_.resize(events.size());
    watch_stream_.reserve(events.size());
    UserId current_user = 0;
    bool have_user = false;
    int user_stream_begin = 0;
    int last_period = 0;
    for (int pos = 0; pos < static_cast<int>(order_.size()); ++pos) {
        const ChoiceEvent& ev = events[order_[pos]];
        if (!have_user || ev.user != current_user) {
            current_user = ev.user;
            have_user = true;
            ++n_users_;
            user_stream_begin = static_cast<int>(watch_stream_.size());
        } else if (ev.period == last_period) {
            throw ValidationError("duplicate user-day in log: user " + std::to_string(ev.user) +
                                  " day " + std::to_string(ev.period));
        }
        last_period = ev.period;
        refs_[pos] = {pos, user_stream_begin, static_cast<int>(watch_stream_.size())};
        if (ev.chose_inside()) watch_stream_.push_back(catalog.index_of(ev.choice));
    }
}

}  // namespace recdemand

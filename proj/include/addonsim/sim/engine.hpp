#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <ostream>
#include <queue>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "addonsim/core/error.hpp"
#include "addonsim/core/types.hpp"

namespace addonsim::sim {

enum class EventKind : std::uint8_t {
  RequestArrival,
  StageStart,
  StageEnd,
  FetchComplete,
  PatchBoundary,
  SyncAcquire,
};

inline constexpr std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::RequestArrival: return "RequestArrival";
    case EventKind::StageStart: return "StageStart";
    case EventKind::StageEnd: return "StageEnd";
    case EventKind::FetchComplete: return "FetchComplete";
    case EventKind::PatchBoundary: return "PatchBoundary";
    case EventKind::SyncAcquire: return "SyncAcquire";
  }
  return "Unknown";
}

inline constexpr std::int64_t kNoRequest = -1;

// What the event log keeps of a processed event.
struct EventRecord {
  Millis time = 0.0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::StageStart;
  std::int64_t request_id = kNoRequest;
  std::string resource_id;

  friend bool operator==(const EventRecord&, const EventRecord&) = default;
};

struct Event {
  EventRecord record;
  std::function<void()> action;
};

enum class ResourceKind : std::uint8_t { GpuCompute, LoaderChannel, Link };

// One occupied span on a resource.
struct Activity {
  Millis start = 0.0;
  Millis end = 0.0;
  std::int64_t request_id = kNoRequest;
  std::string label;
};

// Exclusive, non-preemptive resource. Reservations are served FIFO in the
// order acquire() is called; busy_until never decreases.
class Resource {
 public:
  Resource(std::string id, ResourceKind kind) : id_(std::move(id)), kind_(kind) {}

  const std::string& id() const { return id_; }
  ResourceKind kind() const { return kind_; }
  Millis busy_until() const { return busy_until_; }
  const std::vector<Activity>& activities() const { return activities_; }

  // Activities reserved but not yet started at `at`.
  std::size_t queued_at(Millis at) const {
    return static_cast<std::size_t>(std::count_if(activities_.begin(), activities_.end(),
                                                  [at](const Activity& a) { return a.start > at; }));
  }

  Millis busy_ms() const {
    Millis total = 0.0;
    for (const auto& a : activities_) total += a.end - a.start;
    return total;
  }

 private:
  friend class Simulator;

  const Activity& reserve(Millis now, Millis duration, std::int64_t request_id, std::string label) {
    const Millis start = std::max(now, busy_until_);
    busy_until_ = start + duration;
    activities_.push_back(Activity{start, busy_until_, request_id, std::move(label)});
    return activities_.back();
  }

  std::string id_;
  ResourceKind kind_;
  Millis busy_until_ = 0.0;
  std::vector<Activity> activities_;
};

inline constexpr std::uint64_t kDefaultWatchdogEvents = 10'000'000;

// Single-threaded discrete-event kernel. Events run in (time, seq) order;
// seq is assigned at schedule time so equal-time events run in insertion order.
class Simulator {
 public:
  explicit Simulator(std::uint64_t watchdog_events = kDefaultWatchdogEvents) : watchdog_(watchdog_events) {}

  Simulator(const Simulator&) = delete;
  Simulator& operator=(const Simulator&) = delete;

  Millis now() const { return clock_; }

  void schedule(Millis time, EventKind kind, std::int64_t request_id, std::string resource_id,
                std::function<void()> action) {
    if (!(time >= clock_)) {
      std::ostringstream os;
      os << "event " << event_kind_name(kind) << " for request " << request_id << " scheduled at " << time
         << " before clock " << clock_;
      throw SimulationError(os.str());
    }
    queue_.push(Event{EventRecord{time, next_seq_++, kind, request_id, std::move(resource_id)}, std::move(action)});
  }

  // Processes events until none remain and returns the final clock.
  Millis run_until_idle() {
    while (!queue_.empty()) {
      if (processed_ >= watchdog_) {
        std::ostringstream os;
        os << "watchdog: more than " << watchdog_ << " events processed; last events:";
        const std::size_t from = log_.size() > 5 ? log_.size() - 5 : 0;
        for (std::size_t i = from; i < log_.size(); ++i) {
          os << "\n  t=" << log_[i].time << " seq=" << log_[i].seq << " " << event_kind_name(log_[i].kind)
             << " request=" << log_[i].request_id << " resource=" << log_[i].resource_id;
        }
        throw SimulationError(os.str());
      }
      Event ev = queue_.top();
      queue_.pop();
      clock_ = ev.record.time;
      ++processed_;
      log_.push_back(ev.record);
      if (ev.action) ev.action();
    }
    return clock_;
  }

  Resource& add_resource(std::string id, ResourceKind kind) { return resources_.emplace_back(std::move(id), kind); }

  const std::deque<Resource>& resources() const { return resources_; }

  // Occupies `r` for `duration` starting at max(now, busy_until).
  const Activity& acquire(Resource& r, Millis duration, std::int64_t request_id = kNoRequest,
                          std::string label = {}) {
    detail::require(duration >= 0.0, "acquire: duration must be >= 0");
    return r.reserve(clock_, duration, request_id, std::move(label));
  }

  const std::vector<EventRecord>& event_log() const { return log_; }
  std::uint64_t processed() const { return processed_; }

 private:
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.record.time != b.record.time) return a.record.time > b.record.time;
      return a.record.seq > b.record.seq;
    }
  };

  std::priority_queue<Event, std::vector<Event>, Later> queue_;
  std::deque<Resource> resources_;
  std::vector<EventRecord> log_;
  Millis clock_ = 0.0;
  std::uint64_t next_seq_ = 0;
  std::uint64_t processed_ = 0;
  std::uint64_t watchdog_;
};

}  // namespace addonsim::sim

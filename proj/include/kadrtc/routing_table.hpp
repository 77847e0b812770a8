/*
Copyright 2026 The kadrtc Authors

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
*/

#pragma once

#include "kadrtc/endpoint.hpp"
#include "kadrtc/node_id.hpp"

#include <array>
#include <cstddef>
#include <functional>
#include <optional>
#include <vector>

namespace kadrtc {

struct contact
{
	node_id id;
	endpoint address;
	timestamp first_seen{0};
	timestamp last_seen{0};
	// consecutive unanswered requests; nonzero marks the contact stale
	int fail_count = 0;

	bool stale() const { return fail_count > 0; }
};

// Contacts ordered by recency of last contact: entries().front() is the
// least-recently-seen, entries().back() the most recent.
class k_bucket
{
public:
	explicit k_bucket(std::size_t capacity = 20) : m_capacity(capacity) {}

	std::vector<contact> const& entries() const { return m_entries; }
	std::size_t size() const { return m_entries.size(); }
	std::size_t capacity() const { return m_capacity; }
	bool full() const { return m_entries.size() >= m_capacity; }
	bool empty() const { return m_entries.empty(); }

	timestamp last_activity() const { return m_last_activity; }
	void touch(timestamp now) { m_last_activity = now; }

private:
	friend class routing_table;

	std::vector<contact>::iterator find(node_id const& id);

	std::vector<contact> m_entries;
	std::size_t m_capacity;
	timestamp m_last_activity{0};
};

enum class update_status
{
	inserted,
	refreshed,
	// the bucket is full; the caller pings `eldest` and then calls
	// resolve_eviction()
	bucket_full_ping_eldest,
};

struct update_outcome
{
	update_status status;
	std::optional<contact> eldest;
};

// A flat array of 160 k-buckets. Bucket i holds contacts whose distance d
// from the owner satisfies 2^i <= d < 2^(i+1).
//
// Not synchronized; the owning node serializes all access.
class routing_table
{
public:
	static constexpr int bucket_count = node_id::bits;

	explicit routing_table(node_id owner, std::size_t k = 20);

	node_id const& owner() const { return m_owner; }
	std::size_t k() const { return m_k; }

	// Throws std::invalid_argument if c.id is the owner's id.
	update_outcome update_contact(contact const& c);

	// Called once the eldest contact of a full bucket has been probed. A
	// live eldest is moved to the tail and the candidate dropped; a dead
	// one is replaced by the candidate.
	void resolve_eviction(contact const& eldest, bool eldest_alive, contact const& candidate);

	// Up to `count` contacts sorted ascending by distance to `target`.
	// When `include_stale` is false, contacts with fail_count > 0 are
	// skipped.
	std::vector<contact> closest(node_id const& target, std::size_t count
		, bool include_stale = true) const;

	contact const* find(node_id const& id) const;
	bool remove(node_id const& id);
	// returns the new fail count, 0 if the contact is unknown
	int mark_failed(node_id const& id);

	k_bucket const& bucket(int index) const { return m_buckets[std::size_t(index)]; }
	void touch_bucket(int index, timestamp now) { m_buckets[std::size_t(index)].touch(now); }

	std::size_t size() const;
	int occupied_buckets() const;
	// index of the nearest non-empty bucket, -1 if the table is empty
	int lowest_occupied() const;

	void for_each(std::function<void(contact const&)> const& fn) const;

private:
	k_bucket& bucket_for(node_id const& id) { return m_buckets[std::size_t(bucket_index(m_owner, id))]; }

	node_id m_owner;
	std::size_t m_k;
	std::vector<k_bucket> m_buckets;
};

} // namespace kadrtc

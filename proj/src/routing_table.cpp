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

#include "kadrtc/routing_table.hpp"

#include <algorithm>
#include <stdexcept>

namespace kadrtc {

std::vector<contact>::iterator k_bucket::find(node_id const& id)
{
	return std::find_if(m_entries.begin(), m_entries.end()
		, [&](contact const& c) { return c.id == id; });
}

routing_table::routing_table(node_id owner, std::size_t k)
	: m_owner(owner)
	, m_k(k)
	, m_buckets(bucket_count, k_bucket(k))
{
	if (k == 0) throw std::invalid_argument("routing_table: k must be positive");
}

update_outcome routing_table::update_contact(contact const& c)
{
	if (c.id == m_owner) throw std::invalid_argument("routing_table: cannot insert own id");
	k_bucket& b = bucket_for(c.id);

	if (auto i = b.find(c.id); i != b.m_entries.end())
	{
		contact updated = c;
		updated.first_seen = std::min(i->first_seen, c.first_seen);
		updated.last_seen = std::max(updated.last_seen, updated.first_seen);
		updated.fail_count = 0;
		b.m_entries.erase(i);
		b.m_entries.push_back(std::move(updated));
		return {update_status::refreshed, std::nullopt};
	}

	if (!b.full())
	{
		contact added = c;
		added.last_seen = std::max(added.last_seen, added.first_seen);
		b.m_entries.push_back(std::move(added));
		return {update_status::inserted, std::nullopt};
	}

	return {update_status::bucket_full_ping_eldest, b.m_entries.front()};
}

void routing_table::resolve_eviction(contact const& eldest, bool eldest_alive
	, contact const& candidate)
{
	if (candidate.id == m_owner) throw std::invalid_argument("routing_table: cannot insert own id");
	k_bucket& b = bucket_for(candidate.id);
	auto const e = b.find(eldest.id);

	if (eldest_alive)
	{
		// the probe answered; it is now the most recently seen entry
		if (e != b.m_entries.end())
		{
			contact moved = *e;
			moved.last_seen = std::max(moved.last_seen, eldest.last_seen);
			moved.fail_count = 0;
			b.m_entries.erase(e);
			b.m_entries.push_back(std::move(moved));
		}
		return;
	}

	if (e != b.m_entries.end()) b.m_entries.erase(e);
	if (b.find(candidate.id) != b.m_entries.end()) return;
	if (b.full()) return;
	contact added = candidate;
	added.last_seen = std::max(added.last_seen, added.first_seen);
	b.m_entries.push_back(std::move(added));
}

std::vector<contact> routing_table::closest(node_id const& target, std::size_t count
	, bool include_stale) const
{
	std::vector<contact> out;
	if (count == 0) return out;

	auto take = [&](int index) {
		for (auto const& c : m_buckets[std::size_t(index)].entries())
			if (include_stale || !c.stale()) out.push_back(c);
	};

	// Bucket `t` (the target's own bucket) holds every contact closer than
	// 2^t to the target, buckets below it are all within [2^t, 2^(t+1)),
	// and each bucket above it is strictly farther than the last.
	int const t = distance(m_owner, target).highest_bit();
	if (t >= 0)
	{
		take(t);
		if (out.size() < count)
			for (int i = 0; i < t; ++i) take(i);
	}
	for (int i = t + 1; i < bucket_count && out.size() < count; ++i) take(i);

	std::sort(out.begin(), out.end(), [&](contact const& a, contact const& b) {
		return distance(a.id, target) < distance(b.id, target);
	});
	if (out.size() > count) out.resize(count);
	return out;
}

contact const* routing_table::find(node_id const& id) const
{
	if (id == m_owner) return nullptr;
	auto const& b = m_buckets[std::size_t(bucket_index(m_owner, id))];
	for (auto const& c : b.entries())
		if (c.id == id) return &c;
	return nullptr;
}

bool routing_table::remove(node_id const& id)
{
	if (id == m_owner) return false;
	k_bucket& b = bucket_for(id);
	auto const i = b.find(id);
	if (i == b.m_entries.end()) return false;
	b.m_entries.erase(i);
	return true;
}

int routing_table::mark_failed(node_id const& id)
{
	if (id == m_owner) return 0;
	k_bucket& b = bucket_for(id);
	auto const i = b.find(id);
	if (i == b.m_entries.end()) return 0;
	return ++i->fail_count;
}

std::size_t routing_table::size() const
{
	std::size_t n = 0;
	for (auto const& b : m_buckets) n += b.size();
	return n;
}

int routing_table::occupied_buckets() const
{
	return int(std::count_if(m_buckets.begin(), m_buckets.end()
		, [](k_bucket const& b) { return !b.empty(); }));
}

int routing_table::lowest_occupied() const
{
	for (int i = 0; i < bucket_count; ++i)
		if (!m_buckets[std::size_t(i)].empty()) return i;
	return -1;
}

void routing_table::for_each(std::function<void(contact const&)> const& fn) const
{
	for (auto const& b : m_buckets)
		for (auto const& c : b.entries()) fn(c);
}

} // namespace kadrtc

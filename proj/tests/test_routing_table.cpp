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

#include "doctest.h"

#include <algorithm>
#include <set>

using namespace kadrtc;

namespace {

contact make_contact(node_id id, std::int64_t t = 0)
{
	return contact{id, endpoint("10.0.0.1:" + std::to_string(1000 + (id[19] % 100))), timestamp(t), timestamp(t), 0};
}

// an id in bucket `index` of a table owned by zero
node_id in_bucket(int index, rng& r)
{
	return random_id_in_bucket(node_id(), index, r);
}

std::vector<node_id> ids_of(std::vector<contact> const& cs)
{
	std::vector<node_id> out;
	for (auto const& c : cs) out.push_back(c.id);
	return out;
}

std::vector<node_id> bucket_ids(routing_table const& t, int i)
{
	return ids_of(t.bucket(i).entries());
}

std::vector<node_id> brute_closest(std::vector<node_id> ids, node_id const& target, std::size_t count)
{
	std::sort(ids.begin(), ids.end(), [&](node_id const& a, node_id const& b) {
		// compare a^target and b^target byte by byte
		for (std::size_t i = 0; i < node_id::size; ++i)
		{
			std::uint8_t const x = a[i] ^ target[i], y = b[i] ^ target[i];
			if (x != y) return x < y;
		}
		return false;
	});
	if (ids.size() > count) ids.resize(count);
	return ids;
}

void check_placement(routing_table const& t)
{
	std::set<node_id> seen;
	for (int i = 0; i < routing_table::bucket_count; ++i)
	{
		auto const& b = t.bucket(i);
		REQUIRE(b.size() <= t.k());
		for (auto const& c : b.entries())
		{
			REQUIRE(c.id != t.owner());
			REQUIRE(distance(t.owner(), c.id) >= node_id::power_of_two(i));
			if (i < 159) REQUIRE(distance(t.owner(), c.id) < node_id::power_of_two(i + 1));
			REQUIRE(seen.insert(c.id).second);
			REQUIRE(c.last_seen >= c.first_seen);
		}
	}
}

} // namespace

TEST_CASE("closest on an empty table")
{
	routing_table t(node_id::from_uint(1));
	CHECK(t.closest(node_id::from_uint(99), 20).empty());
}

TEST_CASE("closest with three contacts returns all, sorted")
{
	routing_table t{node_id()};
	for (std::uint64_t v : {0x10u, 0x3u, 0x7u}) t.update_contact(make_contact(node_id::from_uint(v)));
	auto const got = ids_of(t.closest(node_id::from_uint(0x6), 20));
	// distances to 6: 0x10^6=0x16, 3^6=5, 7^6=1
	CHECK(got == std::vector<node_id>{node_id::from_uint(7), node_id::from_uint(3), node_id::from_uint(0x10)});
}

TEST_CASE("closest with 100 random contacts matches a brute-force sort")
{
	rng r(42);
	for (int trial = 0; trial < 20; ++trial)
	{
		node_id const owner = node_id::random(r);
		routing_table t(owner, 100);  // room for every contact
		std::vector<node_id> all;
		while (all.size() < 100)
		{
			node_id const id = node_id::random(r);
			REQUIRE(t.update_contact(make_contact(id)).status == update_status::inserted);
			all.push_back(id);
		}
		node_id const target = node_id::random(r);
		CHECK(ids_of(t.closest(target, 20)) == brute_closest(all, target, 20));
	}
}

TEST_CASE("closest agrees with brute force on 1,000 randomized tables")
{
	rng r(1000);
	for (int trial = 0; trial < 1000; ++trial)
	{
		node_id const owner = node_id::random(r);
		routing_table t(owner, 1 + r.uniform(20));
		int const n = int(r.uniform(300));
		for (int i = 0; i < n; ++i)
		{
			// mix far and near ids so many buckets are populated
			node_id const id = random_id_in_bucket(owner, int(r.uniform(160)), r);
			t.update_contact(make_contact(id));
		}
		std::vector<node_id> members;
		t.for_each([&](contact const& c) { members.push_back(c.id); });
		node_id const target = r.bernoulli(0.5) ? node_id::random(r) : random_id_in_bucket(owner, int(r.uniform(160)), r);
		std::size_t const count = 1 + r.uniform(40);
		REQUIRE(ids_of(t.closest(target, count)) == brute_closest(members, target, count));
	}
}

TEST_CASE("update_contact: insert, refresh, full bucket")
{
	rng r(1);
	routing_table t(node_id(), 20);

	auto const first = make_contact(in_bucket(159, r), 1);
	auto out = t.update_contact(first);
	CHECK(out.status == update_status::inserted);
	CHECK(t.bucket(159).size() == 1);

	std::vector<node_id> ids{first.id};
	while (ids.size() < 20)
	{
		auto const c = make_contact(in_bucket(159, r), std::int64_t(ids.size()) + 1);
		REQUIRE(t.update_contact(c).status == update_status::inserted);
		ids.push_back(c.id);
	}
	CHECK(bucket_ids(t, 159) == ids);

	auto const before = bucket_ids(t, 159);
	auto const extra = make_contact(in_bucket(159, r), 50);
	out = t.update_contact(extra);
	CHECK(out.status == update_status::bucket_full_ping_eldest);
	REQUIRE(out.eldest);
	CHECK(out.eldest->id == first.id);
	CHECK(bucket_ids(t, 159) == before);

	// re-seeing the head moves it to the tail
	contact again = first;
	again.last_seen = timestamp(60);
	CHECK(t.update_contact(again).status == update_status::refreshed);
	CHECK(t.bucket(159).entries().back().id == first.id);
	CHECK(t.bucket(159).entries().back().first_seen == timestamp(1));
	CHECK(t.bucket(159).entries().back().last_seen == timestamp(60));
	CHECK(t.bucket(159).entries().front().id == ids[1]);
}

TEST_CASE("own id is rejected")
{
	routing_table t(node_id::from_uint(5));
	CHECK_THROWS_AS(t.update_contact(make_contact(node_id::from_uint(5))), std::invalid_argument);
	CHECK(t.size() == 0);
}

TEST_CASE("resolve_eviction keeps a live eldest and replaces a dead one")
{
	rng r(2);
	routing_table t(node_id(), 20);
	for (int i = 0; i < 20; ++i) t.update_contact(make_contact(in_bucket(159, r), i));
	auto const eldest = t.bucket(159).entries().front();

	auto const c1 = make_contact(in_bucket(159, r), 100);
	t.resolve_eviction(eldest, true, c1);
	CHECK(t.find(c1.id) == nullptr);
	CHECK(t.bucket(159).entries().back().id == eldest.id);

	auto const eldest2 = t.bucket(159).entries().front();
	auto const c2 = make_contact(in_bucket(159, r), 101);
	t.resolve_eviction(eldest2, false, c2);
	CHECK(t.find(eldest2.id) == nullptr);
	CHECK(t.find(c2.id) != nullptr);
	CHECK(t.bucket(159).entries().back().id == c2.id);
	CHECK(t.bucket(159).size() == 20);
}

TEST_CASE("a flood of 1,000 newcomers cannot displace live contacts")
{
	rng r(3);
	routing_table t(node_id(), 20);
	for (int i = 0; i < 20; ++i) t.update_contact(make_contact(in_bucket(159, r), i));
	auto members = [&] {
		auto v = bucket_ids(t, 159);
		return std::set<node_id>(v.begin(), v.end());
	};
	auto const before = members();

	for (int i = 0; i < 1000; ++i)
	{
		auto const c = make_contact(in_bucket(159, r), 100 + i);
		auto const out = t.update_contact(c);
		REQUIRE(out.status == update_status::bucket_full_ping_eldest);
		t.resolve_eviction(*out.eldest, true, c);
	}
	CHECK(members() == before);
	check_placement(t);
}

TEST_CASE("random update sequences keep every table invariant")
{
	rng r(77);
	for (int trial = 0; trial < 50; ++trial)
	{
		node_id const owner = node_id::random(r);
		routing_table t(owner, 1 + r.uniform(8));
		std::vector<node_id> known;
		for (int step = 0; step < 400; ++step)
		{
			std::int64_t const now = step;
			int const op = int(r.uniform(5));
			if (op == 0 && !known.empty())
			{
				contact c = make_contact(known[r.uniform(known.size())], now);
				t.update_contact(c);
			}
			else if (op == 1 && !known.empty())
			{
				t.mark_failed(known[r.uniform(known.size())]);
			}
			else if (op == 2 && !known.empty())
			{
				t.remove(known[r.uniform(known.size())]);
			}
			else
			{
				node_id const id = random_id_in_bucket(owner, int(150 + r.uniform(10)), r);
				contact const c = make_contact(id, now);
				auto const out = t.update_contact(c);
				if (out.status == update_status::bucket_full_ping_eldest)
					t.resolve_eviction(*out.eldest, r.bernoulli(0.5), c);
				known.push_back(id);
			}
			check_placement(t);
		}
	}
}

TEST_CASE("stale contacts can be filtered from closest")
{
	routing_table t{node_id()};
	for (std::uint64_t v = 1; v <= 5; ++v) t.update_contact(make_contact(node_id::from_uint(v)));
	CHECK(t.mark_failed(node_id::from_uint(1)) == 1);
	CHECK(t.mark_failed(node_id::from_uint(99)) == 0);
	auto const all = ids_of(t.closest(node_id(), 5));
	auto const live = ids_of(t.closest(node_id(), 5, false));
	CHECK(all.size() == 5);
	CHECK(live.size() == 4);
	CHECK(std::find(live.begin(), live.end(), node_id::from_uint(1)) == live.end());
	// hearing from it again clears the mark
	t.update_contact(make_contact(node_id::from_uint(1), 9));
	CHECK_FALSE(t.find(node_id::from_uint(1))->stale());
}

TEST_CASE("occupancy helpers")
{
	routing_table t{node_id()};
	CHECK(t.lowest_occupied() == -1);
	CHECK(t.occupied_buckets() == 0);
	t.update_contact(make_contact(node_id::from_uint(0x30)));  // bucket 5
	t.update_contact(make_contact(node_id::from_uint(0x4)));   // bucket 2
	t.update_contact(make_contact(node_id::from_uint(0x5)));   // bucket 2
	CHECK(t.lowest_occupied() == 2);
	CHECK(t.occupied_buckets() == 2);
	CHECK(t.size() == 3);
}

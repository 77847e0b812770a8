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

#include "kadrtc/node.hpp"

#include <algorithm>
#include <random>
#include <stdexcept>

namespace kadrtc {

void node_config::validate() const
{
	if (k == 0) throw std::invalid_argument("node_config: k must be positive");
	if (alpha < 1 || alpha > k) throw std::invalid_argument("node_config: need 1 <= alpha <= k");
	if (rpc_timeout.count() <= 0) throw std::invalid_argument("node_config: rpc_timeout must be positive");
	if (rpc_retries < 0) throw std::invalid_argument("node_config: rpc_retries must be >= 0");
	if (record_ttl_default.count() <= 0 || republish_interval.count() <= 0 || refresh_interval.count() <= 0)
		throw std::invalid_argument("node_config: intervals must be positive");
}

char const* to_string(lookup_status s)
{
	switch (s)
	{
	case lookup_status::ok: return "ok";
	case lookup_status::not_joined: return "not_joined";
	case lookup_status::all_queries_failed: return "all_queries_failed";
	}
	return "?";
}

char const* to_string(value_status s)
{
	switch (s)
	{
	case value_status::found: return "found";
	case value_status::not_found: return "not_found";
	case value_status::not_joined: return "not_joined";
	case value_status::all_queries_failed: return "all_queries_failed";
	}
	return "?";
}

struct node::lookup
{
	enum class state : std::uint8_t { unqueried, in_flight, responded, failed };
	struct entry
	{
		peer_info peer;
		node_id dist;
		state st = state::unqueried;
	};

	node_id target;
	bool want_value = false;
	std::vector<entry> shortlist;  // ascending by distance
	std::unordered_set<node_id, node_id_hash> seen;
	int rounds = 0;
	int queried = 0;
	int in_flight = 0;
	bool finished = false;
	bool not_joined = false;

	bool found = false;
	node_id value_holder;
	std::vector<value_entry> values;

	std::function<void(std::shared_ptr<lookup> const&)> done;

	void add(peer_info const& p)
	{
		if (!seen.insert(p.id).second) return;
		entry e{p, distance(p.id, target), state::unqueried};
		auto const pos = std::lower_bound(shortlist.begin(), shortlist.end(), e.dist
			, [](entry const& a, node_id const& d) { return a.dist < d; });
		shortlist.insert(pos, std::move(e));
	}

	entry* find(node_id const& id)
	{
		for (auto& e : shortlist)
			if (e.peer.id == id) return &e;
		return nullptr;
	}

	// the k closest entries that have answered
	std::vector<peer_info> responded(std::size_t k) const
	{
		std::vector<peer_info> out;
		for (auto const& e : shortlist)
		{
			if (out.size() == k) break;
			if (e.st == state::responded) out.push_back(e.peer);
		}
		return out;
	}
};

node::node(node_id id, std::unique_ptr<transport> t, node_config cfg)
	: m_transport(std::move(t))
	, m_id(id)
	, m_config(cfg)
	, m_rng(cfg.seed ? cfg.seed : (std::uint64_t(std::random_device{}()) << 32 | std::random_device{}()))
	, m_table(id, cfg.k)
{
	m_config.validate();
	if (!m_transport) throw std::invalid_argument("node: transport required");
	m_transport->set_receive_handler([this](endpoint const& from, std::string_view raw) {
		on_datagram(from, raw);
	});
	schedule_refresh();
}

node::~node()
{
	m_transport->set_receive_handler({});
	for (auto& [rid, c] : m_calls) m_transport->cancel(c.timer);
	for (auto& [key, p] : m_published) m_transport->cancel(p.timer);
	m_transport->cancel(m_refresh_timer);
}

rpc_message node::make_message(rpc_kind kind, rpc_body body, node_id const& rpc_id) const
{
	return rpc_message{rpc_id, self(), kind, std::move(body)};
}

node_id node::fresh_rpc_id()
{
	node_id rid;
	do rid = node_id::random(m_rng); while (m_pending.contains(rid));
	return rid;
}

void node::send_datagram(endpoint const& to, std::string const& datagram)
{
	++m_stats.sent;
	m_transport->send(to, datagram);
}

void node::on_datagram(endpoint const& from, std::string_view raw)
{
	++m_stats.received;
	auto r = decode(raw);
	if (!r)
	{
		++m_stats.malformed;
		return;
	}
	rpc_message const& msg = *r.message;
	if (msg.sender.id == m_id) return;

	if (is_request(msg.kind))
	{
		auto resp = handle_rpc(msg, from);
		if (!resp) return;
		try
		{
			send_datagram(from, encode(*resp));
		}
		catch (encode_error const&)
		{
			++m_stats.malformed;
		}
		return;
	}

	learn({msg.sender.id, from});
	auto const entry = m_pending.match_response(msg);
	if (!entry)
	{
		++m_stats.unsolicited;
		return;
	}
	auto const i = m_calls.find(msg.rpc_id);
	if (i == m_calls.end()) return;
	m_transport->cancel(i->second.timer);
	auto done = std::move(i->second.done);
	m_calls.erase(i);
	if (done) done(msg);
}

void node::learn(peer_info const& peer)
{
	if (peer.id == m_id) return;
	timestamp const now = m_transport->now();
	contact const c{peer.id, peer.address, now, now, 0};
	auto const outcome = m_table.update_contact(c);
	if (outcome.status != update_status::bucket_full_ping_eldest) return;

	int const index = bucket_index(m_id, peer.id);
	// one probe per bucket at a time; later candidates are dropped
	if (!m_evicting.insert(index).second) return;
	contact const eldest = *outcome.eldest;
	request({eldest.id, eldest.address}, rpc_kind::ping, empty_body{}
		, [this, eldest, c, index](std::optional<rpc_message> resp) {
			m_table.resolve_eviction(eldest, resp.has_value(), c);
			m_evicting.erase(index);
		});
}

void node::request(peer_info const& to, rpc_kind kind, rpc_body body
	, std::function<void(std::optional<rpc_message>)> done)
{
	node_id const rid = fresh_rpc_id();
	call c;
	c.to = to;
	c.datagram = encode(make_message(kind, std::move(body), rid));
	c.done = std::move(done);
	c.attempts = 1;
	m_pending.insert(rid, {kind, to.id, 0});
	auto& stored = m_calls.emplace(rid, std::move(c)).first->second;
	send_datagram(stored.to.address, stored.datagram);
	arm_timeout(rid);
}

void node::arm_timeout(node_id const& rpc_id)
{
	auto& c = m_calls.at(rpc_id);
	c.timer = m_transport->schedule(m_config.rpc_timeout, [this, rpc_id] { on_timeout(rpc_id); });
}

void node::on_timeout(node_id const& rpc_id)
{
	auto const i = m_calls.find(rpc_id);
	if (i == m_calls.end()) return;
	call& c = i->second;
	if (c.attempts <= m_config.rpc_retries)
	{
		++c.attempts;
		send_datagram(c.to.address, c.datagram);
		arm_timeout(rpc_id);
		return;
	}
	++m_stats.timeouts;
	m_pending.expire(rpc_id);
	if (!c.to.id.is_zero()) m_table.mark_failed(c.to.id);
	auto done = std::move(c.done);
	m_calls.erase(i);
	if (done) done(std::nullopt);
}

std::optional<rpc_message> node::handle_rpc(rpc_message const& msg, endpoint const& from)
{
	if (!is_request(msg.kind) || msg.sender.id == m_id) return std::nullopt;
	if (msg.body.index() != default_body(msg.kind).index())
	{
		++m_stats.malformed;
		return std::nullopt;
	}

	peer_info const sender{msg.sender.id, from};
	learn(sender);

	switch (msg.kind)
	{
	case rpc_kind::ping:
		return make_message(rpc_kind::pong, empty_body{}, msg.rpc_id);

	case rpc_kind::store:
	{
		auto const& b = std::get<store_body>(msg.body);
		if (b.value.empty() || b.value.size() > max_value_size || b.ttl_s == 0)
		{
			++m_stats.malformed;
			return std::nullopt;
		}
		put_record(b.key, b.value, seconds(b.ttl_s), sender.id);
		return make_message(rpc_kind::store_ok, empty_body{}, msg.rpc_id);
	}

	case rpc_kind::find_value:
	{
		auto const& target = std::get<find_body>(msg.body).target;
		auto const records = local_records(target);
		if (!records.empty())
		{
			timestamp const now = m_transport->now();
			value_body vb;
			std::size_t budget = max_datagram_size / 2;
			for (auto const& r : records)
			{
				std::size_t const cost = r.value.size() * 2 + 128;
				if (!vb.values.empty() && cost > budget) break;
				budget -= std::min(budget, cost);
				auto const left = (r.expires_at - now).count();
				vb.values.push_back({r.value, r.publisher, std::uint32_t((left + 999) / 1000)});
			}
			return make_message(rpc_kind::value, std::move(vb), msg.rpc_id);
		}
		[[fallthrough]];
	}
	case rpc_kind::find_node:
	{
		auto const& target = std::get<find_body>(msg.body).target;
		nodes_body nb;
		for (auto const& c : m_table.closest(target, m_config.k + 1, false))
		{
			if (c.id == sender.id) continue;
			if (nb.contacts.size() == m_config.k) break;
			nb.contacts.push_back({c.id, c.address});
		}
		return make_message(rpc_kind::nodes, std::move(nb), msg.rpc_id);
	}

	case rpc_kind::signal_relay:
	{
		bool const delivered = m_signal_handler
			&& m_signal_handler(sender, std::get<signal_relay_body>(msg.body));
		if (delivered) return make_message(rpc_kind::relay_ok, empty_body{}, msg.rpc_id);
		return make_message(rpc_kind::relay_fail, relay_fail_body{}, msg.rpc_id);
	}

	default:
		return std::nullopt;
	}
}

void node::ping(endpoint const& to, std::function<void(std::optional<peer_info>)> done)
{
	request({node_id(), to}, rpc_kind::ping, empty_body{}
		, [to, done = std::move(done)](std::optional<rpc_message> resp) {
			if (!resp) return done(std::nullopt);
			done(peer_info{resp->sender.id, to});
		});
}

void node::start_lookup(node_id const& target, bool want_value
	, std::function<void(std::shared_ptr<lookup> const&)> finished)
{
	auto l = std::make_shared<lookup>();
	l->target = target;
	l->want_value = want_value;
	l->done = std::move(finished);
	l->seen.insert(m_id);

	if (target != m_id) m_table.touch_bucket(bucket_index(m_id, target), m_transport->now());

	auto seeds = m_table.closest(target, m_config.k, false);
	if (seeds.empty()) seeds = m_table.closest(target, m_config.k, true);
	for (auto const& c : seeds) l->add({c.id, c.address});

	if (l->shortlist.empty())
	{
		l->not_joined = true;
		m_transport->schedule(milliseconds(0), [this, l] { finish_lookup(l); });
		return;
	}
	lookup_round(l);
}

void node::lookup_round(std::shared_ptr<lookup> const& l)
{
	// Query up to alpha unqueried entries among the k closest that have not
	// failed. Once all of those have answered, nothing closer can turn up.
	std::vector<lookup::entry*> picks;
	std::size_t considered = 0;
	for (auto& e : l->shortlist)
	{
		if (e.st == lookup::state::failed) continue;
		if (considered++ == m_config.k) break;
		if (e.st == lookup::state::unqueried && picks.size() < m_config.alpha) picks.push_back(&e);
	}
	if (picks.empty())
	{
		finish_lookup(l);
		return;
	}

	++l->rounds;
	std::vector<peer_info> targets;
	for (auto* e : picks)
	{
		e->st = lookup::state::in_flight;
		targets.push_back(e->peer);
	}
	l->in_flight += int(targets.size());
	l->queried += int(targets.size());

	rpc_kind const kind = l->want_value ? rpc_kind::find_value : rpc_kind::find_node;
	for (auto const& p : targets)
	{
		request(p, kind, find_body{l->target}
			, [this, l, id = p.id](std::optional<rpc_message> resp) { lookup_response(l, id, resp); });
	}
}

void node::lookup_response(std::shared_ptr<lookup> const& l, node_id const& peer
	, std::optional<rpc_message> const& resp)
{
	if (l->finished) return;
	--l->in_flight;
	auto* e = l->find(peer);
	if (!e) return;

	if (!resp)
	{
		e->st = lookup::state::failed;
	}
	else if (resp->kind == rpc_kind::value && l->want_value)
	{
		e->st = lookup::state::responded;
		l->found = true;
		l->value_holder = peer;
		l->values = std::get<value_body>(resp->body).values;
		finish_lookup(l);
		return;
	}
	else if (resp->kind == rpc_kind::nodes)
	{
		e->st = lookup::state::responded;
		for (auto const& p : std::get<nodes_body>(resp->body).contacts) l->add(p);
	}
	else
	{
		e->st = lookup::state::failed;
	}

	if (l->in_flight == 0) lookup_round(l);
}

void node::finish_lookup(std::shared_ptr<lookup> const& l)
{
	if (l->finished) return;
	l->finished = true;
	auto done = std::move(l->done);
	if (done) done(l);
}

void node::iterative_find_node(node_id const& target, std::function<void(lookup_result)> done)
{
	start_lookup(target, false, [this, done = std::move(done)](std::shared_ptr<lookup> const& l) {
		lookup_result r;
		r.rounds = l->rounds;
		r.queried = l->queried;
		r.contacts = l->responded(m_config.k);
		if (l->not_joined) r.status = lookup_status::not_joined;
		else if (r.contacts.empty()) r.status = lookup_status::all_queries_failed;
		done(std::move(r));
	});
}

void node::iterative_find_value(node_id const& key, std::function<void(value_lookup_result)> done)
{
	auto local = local_records(key);
	if (!local.empty())
	{
		value_lookup_result r;
		r.status = value_status::found;
		timestamp const now = m_transport->now();
		for (auto const& rec : local)
		{
			auto const left = (rec.expires_at - now).count();
			r.values.push_back({rec.value, rec.publisher, std::uint32_t((left + 999) / 1000)});
		}
		m_transport->schedule(milliseconds(0), [done = std::move(done), r = std::move(r)] { done(r); });
		return;
	}

	start_lookup(key, true, [this, key, done = std::move(done)](std::shared_ptr<lookup> const& l) {
		value_lookup_result r;
		r.rounds = l->rounds;
		if (l->found)
		{
			r.status = value_status::found;
			r.values = l->values;
			// cache one copy at the closest node that answered without it
			for (auto const& e : l->shortlist)
			{
				if (e.st != lookup::state::responded || e.peer.id == l->value_holder) continue;
				auto const& v = r.values.front();
				request(e.peer, rpc_kind::store, store_body{key, v.value, v.ttl_s}, {});
				break;
			}
		}
		else if (l->not_joined)
		{
			r.status = value_status::not_joined;
		}
		else if (l->responded(1).empty())
		{
			r.status = value_status::all_queries_failed;
		}
		done(std::move(r));
	});
}

void node::store(node_id const& key, std::string value, seconds ttl
	, std::function<void(store_result)> done, bool republish)
{
	if (value.empty() || value.size() > max_value_size)
		throw std::invalid_argument("store: value must be 1..8192 bytes");
	if (ttl.count() <= 0) throw std::invalid_argument("store: ttl must be positive");

	if (republish)
	{
		unpublish(key);
		m_published[key] = publication{value, ttl, 0};
		schedule_republish(key);
	}
	replicate(key, value, ttl, std::move(done));
}

void node::unpublish(node_id const& key)
{
	auto const i = m_published.find(key);
	if (i == m_published.end()) return;
	m_transport->cancel(i->second.timer);
	m_published.erase(i);
}

void node::schedule_republish(node_id const& key)
{
	auto& p = m_published.at(key);
	auto const period = std::max(seconds(1), std::min(m_config.republish_interval, p.ttl / 2));
	p.timer = m_transport->schedule(period, [this, key] {
		auto const i = m_published.find(key);
		if (i == m_published.end()) return;
		replicate(key, i->second.value, i->second.ttl, {});
		schedule_republish(key);
	});
}

void node::replicate(node_id const& key, std::string const& value, seconds ttl
	, std::function<void(store_result)> done)
{
	iterative_find_node(key, [this, key, value, ttl, done = std::move(done)](lookup_result r) {
		store_result out;
		out.rounds = r.rounds;
		if (r.status != lookup_status::ok)
		{
			if (done) done(out);
			return;
		}

		// the k closest to the key, this node included
		auto holders = r.contacts;
		holders.push_back(self());
		std::sort(holders.begin(), holders.end(), [&](peer_info const& a, peer_info const& b) {
			return distance(a.id, key) < distance(b.id, key);
		});
		if (holders.size() > m_config.k) holders.resize(m_config.k);

		std::vector<peer_info> remote;
		for (auto const& h : holders)
		{
			if (h.id == m_id)
			{
				put_record(key, value, ttl, m_id);
				++out.acks;
			}
			else remote.push_back(h);
		}
		if (remote.empty())
		{
			out.ok = out.acks > 0;
			if (done) done(out);
			return;
		}

		struct tally { store_result result; std::size_t outstanding; };
		auto t = std::make_shared<tally>(tally{out, remote.size()});
		std::uint32_t const ttl_s = std::uint32_t(ttl.count());
		for (auto const& h : remote)
		{
			request(h, rpc_kind::store, store_body{key, value, ttl_s}
				, [t, done](std::optional<rpc_message> resp) {
					if (resp) ++t->result.acks;
					if (--t->outstanding > 0) return;
					t->result.ok = t->result.acks > 0;
					if (done) done(t->result);
				});
		}
	});
}

void node::join(endpoint const& bootstrap, std::function<void(join_report)> done)
{
	ping(bootstrap, [this, done = std::move(done)](std::optional<peer_info> boot) {
		if (!boot)
		{
			done(join_report{false, m_table.size()});
			return;
		}
		// announce ourselves: the self-lookup puts us in the tables of the
		// nodes nearest to our id
		iterative_find_node(m_id, [this, done](lookup_result) {
			int const nearest = m_table.lowest_occupied();
			if (nearest < 0 || nearest + 1 >= routing_table::bucket_count)
			{
				done(join_report{true, m_table.size()});
				return;
			}
			auto outstanding = std::make_shared<int>(routing_table::bucket_count - nearest - 1);
			for (int i = nearest + 1; i < routing_table::bucket_count; ++i)
			{
				iterative_find_node(random_id_in_bucket(m_id, i, m_rng), [this, outstanding, done](lookup_result) {
					if (--*outstanding == 0) done(join_report{true, m_table.size()});
				});
			}
		});
	});
}

std::vector<int> node::refresh_buckets(timestamp now)
{
	std::vector<int> refreshed;
	int const nearest = m_table.lowest_occupied();
	if (nearest < 0) return refreshed;
	for (int i = nearest; i < routing_table::bucket_count; ++i)
	{
		if (now - m_table.bucket(i).last_activity() < m_config.refresh_interval) continue;
		refreshed.push_back(i);
		iterative_find_node(random_id_in_bucket(m_id, i, m_rng), [](lookup_result) {});
	}
	return refreshed;
}

void node::schedule_refresh()
{
	m_refresh_timer = m_transport->schedule(m_config.refresh_interval, [this] {
		purge_expired();
		refresh_buckets(m_transport->now());
		schedule_refresh();
	});
}

void node::send_signal_relay(peer_info const& to, signal_relay_body body
	, std::function<void(relay_result)> done)
{
	request(to, rpc_kind::signal_relay, std::move(body)
		, [done = std::move(done)](std::optional<rpc_message> resp) {
			if (!done) return;
			if (!resp) done(relay_result::timeout);
			else if (resp->kind == rpc_kind::relay_ok) done(relay_result::ok);
			else done(relay_result::no_such_peer);
		});
}

void node::put_record(node_id const& key, std::string value, seconds ttl, node_id const& publisher)
{
	timestamp const now = m_transport->now();
	m_storage[key][publisher] = stored_record{key, std::move(value), now + ttl, now, publisher};
}

std::vector<stored_record> node::local_records(node_id const& key)
{
	std::vector<stored_record> out;
	auto const i = m_storage.find(key);
	if (i == m_storage.end()) return out;
	timestamp const now = m_transport->now();
	auto& by_publisher = i->second;
	for (auto j = by_publisher.begin(); j != by_publisher.end();)
	{
		if (j->second.expires_at <= now) j = by_publisher.erase(j);
		else out.push_back((j++)->second);
	}
	if (by_publisher.empty()) m_storage.erase(i);
	std::stable_sort(out.begin(), out.end(), [](stored_record const& a, stored_record const& b) {
		return a.stored_at > b.stored_at;
	});
	return out;
}

std::size_t node::record_count()
{
	purge_expired();
	std::size_t n = 0;
	for (auto const& [key, recs] : m_storage) n += recs.size();
	return n;
}

void node::purge_expired()
{
	timestamp const now = m_transport->now();
	for (auto i = m_storage.begin(); i != m_storage.end();)
	{
		auto& recs = i->second;
		for (auto j = recs.begin(); j != recs.end();)
		{
			if (j->second.expires_at <= now) j = recs.erase(j);
			else ++j;
		}
		if (recs.empty()) i = m_storage.erase(i);
		else ++i;
	}
}

} // namespace kadrtc

from __future__ import annotations

import json
import math
import random
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from lifelong_harness.core import EnvKind, TaskInstance
from lifelong_harness.datagen import (
    Candidate,
    InfeasibleSelection,
    MalformedReply,
    MockDBGenerator,
    PipelineConfig,
    PipelineResult,
    RejectReason,
    SkillStats,
    UnsupportedExpression,
    action_skills,
    convert_record,
    detect_db_skills,
    detect_os_commands,
    generate_candidate,
    generation_prompt,
    parse_candidate,
    parse_sexpr,
    relatedness,
    replay_actions,
    requested_skills,
    review_sample,
    run_generation,
    run_ingestion,
    sample_skill_subset,
    sample_with_rare_ratio,
    select_balanced_subset,
    sexpr_to_actions,
    validate_task,
    write_outputs,
)
from lifelong_harness.datagen.sampling import skill_weight
from lifelong_harness.environments.kg import TripleStore
from lifelong_harness.errors import AgentFailure
from lifelong_harness.skills import DB_SKILLS

# -- SQL skill detection ---------------------------------------------------------

SQL_CASES = [
    (
        'INSERT INTO membership_payments (member_id, payment_date, amount, payment_method) '
        'VALUES (102, "2023-10-15", 75, "Credit Card")',
        {"insert"},
    ),
    ("DELETE FROM equipment_service WHERE maintenance_status = 0;", {"delete", "where_single_condition"}),
    (
        'UPDATE experiment_data SET result_status = "completed", hours_spent = 48 WHERE experiment_id = 105;',
        {"update", "where_single_condition"},
    ),
    (
        'SELECT model, year, price FROM vehicle_inventory WHERE status = "available" ORDER BY price DESC;',
        {"order_by_single_column", "select", "where_single_condition"},
    ),
    (
        "SELECT listing_id AS id, property_type AS type, price, square_feet FROM property_listings "
        "ORDER BY price DESC, square_feet DESC LIMIT 10;",
        {"column_alias", "limit_only", "order_by_multiple_columns_same_direction", "select"},
    ),
    (
        "SELECT route_id, driver_name FROM delivery_routes WHERE distance_km > (SELECT AVG(distance_km) "
        "FROM delivery_routes) AND distance_km < (SELECT MAX(distance_km) FROM delivery_routes);",
        {"select", "subquery_multiple", "where_multiple_conditions"},
    ),
    (
        'SELECT owner_id, COUNT(*) AS total_vaccinations FROM vaccination_records WHERE pet_type = "Dog" '
        'AND vaccination_date >= "2023-01-01" GROUP BY owner_id HAVING COUNT(*) > 3;',
        {
            "column_alias",
            "group_by_single_column",
            "where_multiple_conditions",
            "having_single_condition_with_aggregate",
            "select",
        },
    ),
    (
        'SELECT i.item_id AS id, i.item_name AS name FROM inventory_management AS i WHERE (i.category = '
        '"Electronics" AND i.stock_quantity < (SELECT AVG(stock_quantity) FROM inventory_management)) OR '
        "i.category = (SELECT category FROM inventory_management WHERE item_id = 100);",
        {"column_alias", "subquery_multiple", "table_alias", "where_nested_conditions", "select"},
    ),
    (
        "SELECT seat_number, MAX(price)-MIN(price) AS price_diff FROM ticket_sales GROUP BY seat_number "
        "HAVING MAX(price)-MIN(price)>50 ORDER BY seat_number DESC LIMIT 5;",
        {
            "column_alias",
            "group_by_single_column",
            "having_aggregate_calculation",
            "having_single_condition_with_aggregate",
            "limit_only",
            "order_by_single_column",
            "select",
        },
    ),
    (
        "SELECT guest_id AS gid, AVG(rating) AS avg_rating, COUNT(review_id) AS total_reviews FROM "
        "hotel_reviews AS hr WHERE guest_id IN (SELECT guest_id FROM hotel_reviews WHERE rating = 5) OR "
        'guest_id IN (SELECT guest_id FROM hotel_reviews WHERE review_date < "2023-01-01") GROUP BY guest_id '
        "HAVING COUNT(review_id) > 5 AND AVG(rating) < 4.5 ORDER BY avg_rating DESC, total_reviews ASC;",
        {
            "where_multiple_conditions",
            "group_by_single_column",
            "select",
            "table_alias",
            "subquery_multiple",
            "column_alias",
            "having_multiple_conditions_with_aggregate",
            "order_by_multiple_columns_different_directions",
        },
    ),
]


@pytest.mark.parametrize("sql,skills", SQL_CASES, ids=[f"db-case-{i + 1}" for i in range(len(SQL_CASES))])
def test_sql_skill_detection_worked_examples(sql, skills):
    assert detect_db_skills(sql) == skills


@pytest.mark.parametrize(
    "sql,present,absent",
    [
        ("SELECT a FROM t WHERE b BETWEEN 1 AND 5", {"where_single_condition"}, {"where_multiple_conditions"}),
        ("SELECT a FROM t LIMIT 5 OFFSET 2", {"limit_and_offset"}, {"limit_only"}),
        ("SELECT a FROM t LIMIT 2, 5", {"limit_and_offset"}, {"limit_only"}),
        ("SELECT a, b FROM t GROUP BY a, b", {"group_by_multiple_columns"}, {"group_by_single_column"}),
        ("SELECT a FROM t WHERE a IN (SELECT a FROM u WHERE b IN (SELECT b FROM v))", {"subquery_nested"}, set()),
        # Clauses inside a subquery do not tag the outer statement.
        ("SELECT a FROM t WHERE a = (SELECT MAX(a) FROM u GROUP BY b ORDER BY b)", {"subquery_single"},
         {"group_by_single_column", "order_by_single_column"}),
        ("SELECT t.a FROM t", {"select"}, {"table_alias", "column_alias"}),
        ("UPDATE t AS x SET a = 1", {"update", "table_alias"}, set()),
    ],
)
def test_sql_skill_detection_rules(sql, present, absent):
    found = detect_db_skills(sql)
    assert present <= found
    assert not (absent & found)


def test_sql_detection_edge_inputs():
    assert detect_db_skills("") == set()
    assert detect_db_skills("DROP TABLE t") == set()
    with pytest.raises(ValueError):
        detect_db_skills("SELECT (a FROM t")
    with pytest.raises(ValueError):
        detect_db_skills("SELECT a FROM t WHERE a = ?")


@given(st.sampled_from(SQL_CASES), st.sampled_from([str.lower, str.upper, lambda s: s]))
def test_sql_detection_ignores_keyword_case(case, transform):
    sql, skills = case
    # String literals survive either transform as literals, so only keyword case changes the input.
    assert detect_db_skills(transform(sql)) == skills


# -- S-expression conversion ----------------------------------------------------

KG_CASES = [
    (
        "(JOIN (R education.educational_institution.parent_institution) m.03hd1z)",
        ["get_relations(m.03hd1z)", "get_neighbors(m.03hd1z,education.educational_institution.parent_institution)"],
        ("get_neighbors",),
    ),
    (
        "(COUNT (JOIN (R comic_books.comic_book_issue.characters_on_cover) m.02ll5h))",
        ["get_relations(m.02ll5h)", "get_neighbors(m.02ll5h,comic_books.comic_book_issue.characters_on_cover)",
         "count(#0)"],
        ("count", "get_neighbors"),
    ),
    (
        "(ARGMIN (JOIN (R fictional_universe.fictional_universe.works_set_here) m.0ch8hcq) "
        "book.written_work.copyright_date)",
        ["get_relations(m.0ch8hcq)", "get_neighbors(m.0ch8hcq,fictional_universe.fictional_universe.works_set_here)",
         "get_attributes(#0)", "argmin(#0,book.written_work.copyright_date)"],
        ("argmin", "get_neighbors"),
    ),
    (
        "(AND (JOIN (R fictional_universe.fictional_character_creator.fictional_characters_created) m.0279q8n) "
        "(JOIN (R fictional_universe.fictional_character_creator.fictional_characters_created) m.02gn9g))",
        ["get_relations(m.0279q8n)",
         "get_neighbors(m.0279q8n,fictional_universe.fictional_character_creator.fictional_characters_created)",
         "get_relations(m.02gn9g)",
         "get_neighbors(m.02gn9g,fictional_universe.fictional_character_creator.fictional_characters_created)",
         "intersection(#0,#1)"],
        ("get_neighbors", "intersection"),
    ),
    (
        "(ARGMAX (JOIN (R meteorology.tropical_cyclone_category.tropical_cyclones) "
        "(JOIN (R meteorology.tropical_cyclone.category) m.04dn799)) meteorology.tropical_cyclone.formed)",
        ["get_relations(m.04dn799)", "get_neighbors(m.04dn799,meteorology.tropical_cyclone.category)",
         "get_relations(#0)", "get_neighbors(#0,meteorology.tropical_cyclone_category.tropical_cyclones)",
         "get_attributes(#1)", "argmax(#1,meteorology.tropical_cyclone.formed)"],
        ("argmax", "get_neighbors"),
    ),
    (
        "(COUNT (AND (JOIN (R broadcast.genre.content) m.07dn1) (JOIN (R broadcast.producer.produces) "
        "(JOIN (R broadcast.content.producer) m.0t4t10s))))",
        ["get_relations(m.07dn1)", "get_neighbors(m.07dn1,broadcast.genre.content)", "get_relations(m.0t4t10s)",
         "get_neighbors(m.0t4t10s,broadcast.content.producer)", "get_relations(#1)",
         "get_neighbors(#1,broadcast.producer.produces)", "intersection(#0,#2)", "count(#3)"],
        ("count", "get_neighbors", "intersection"),
    ),
]


@pytest.mark.parametrize("sexpr,actions,skills", KG_CASES, ids=[f"kg-case-{i}" for i in range(len(KG_CASES))])
def test_sexpr_conversion_worked_examples(sexpr, actions, skills):
    calls = sexpr_to_actions(sexpr)
    assert [c.render() for c in calls] == actions
    assert action_skills(calls) == skills
    assert action_skills(actions) == skills


def test_and_drops_class_operand_and_plain_join_works():
    calls = sexpr_to_actions("(AND food.cheese (JOIN food.cheese_milk_source.cheeses m.07bgp))")
    assert [c.name for c in calls] == ["get_relations", "get_neighbors"]


@pytest.mark.parametrize(
    "text",
    [
        "m.01",
        "(JOIN (R rel.a.b) m.01",
        "(JOIN (R rel.a.b) m.01))",
        "(OR (JOIN r.a.b m.01) (JOIN r.a.b m.02))",
        "(JOIN (R rel.a.b) \"literal\")",
        "(AND food.cheese food.cheese)",
        "(JOIN (R rel.a.b) (COUNT (JOIN r.a.b m.01)))",
        "",
    ],
)
def test_unsupported_expressions_raise(text):
    with pytest.raises(UnsupportedExpression):
        sexpr_to_actions(text)


def test_parse_sexpr_tree():
    assert parse_sexpr("(COUNT (JOIN r.a.b m.1))") == ["COUNT", ["JOIN", "r.a.b", "m.1"]]


def test_convert_record_fields():
    record = {"qid": 7, "question": "how many?", "s_expression": KG_CASES[1][0], "entities": {"Tintin": "m.02ll5h"}}
    fields = convert_record(record)
    assert fields["task_id"] == "7"
    assert fields["skills"] == ("count", "get_neighbors")
    assert fields["difficulty"] == 3
    assert fields["setup"] == {"entities": {"Tintin": "m.02ll5h"}}


# -- validation -----------------------------------------------------------------

ROSTER = {
    "table": "roster",
    "headers": ["id", "name", "team", "score"],
    "rows": [[1, "Ada", "red", 10], [2, "Bo", "blue", 7], [3, "Cy", "red", 3]],
}


def db_candidate(sql: str, skills, expected=None) -> Candidate:
    return Candidate("db-x", EnvKind.DB, "do it", ROSTER, sql, expected or {}, tuple(skills), "easy")


def test_db_query_reproducing_claim_is_accepted_with_full_tags():
    sql = 'SELECT name FROM roster WHERE team = "red" ORDER BY score DESC'
    verdict = validate_task(db_candidate(sql, ["select"], {"rows": [["Ada"], ["Cy"]]}))
    assert verdict.accepted
    task = verdict.task
    assert task.ground_truth == {"sql": sql, "rows": [["Ada"], ["Cy"]]}
    assert set(task.skills) == {"select", "where_single_condition", "order_by_single_column"}
    assert list(task.skills) == [s for s in DB_SKILLS if s in task.skills]


def test_db_mutation_records_digest_and_reverifies():
    verdict = validate_task(db_candidate("UPDATE roster SET score = score + 1 WHERE id = 2", ["update"]))
    assert verdict.accepted and "digest" in verdict.task.ground_truth
    again = validate_task(Candidate.from_task(verdict.task))
    assert again.accepted and again.task == verdict.task


@pytest.mark.parametrize(
    "sql,skills,expected,reason",
    [
        ("SELECT name FROM roster", ["select"], {"rows": [["Ada"]]}, RejectReason.ANSWER_MISMATCH),
        ("SELECT name FROM roster", ["select"], {}, RejectReason.MALFORMED),
        ("UPDATE roster SET score = 0 WHERE id = 99", ["update"], {}, RejectReason.NO_EFFECT),
        ("SELECT name FROM roster", ["select", "limit_only"], {"rows": []}, RejectReason.SKILL_ABSENT),
        ("SELECT name FROM roster", ["select", "teleport"], {"rows": []}, RejectReason.UNKNOWN_SKILL),
        ("SELECT nope FROM roster", ["select"], {"rows": []}, RejectReason.EXECUTION_ERROR),
        ("SELECT 1; SELECT 2", ["select"], {"rows": []}, RejectReason.MALFORMED),
        ("SELECT name FROM roster", [], {"rows": []}, RejectReason.MALFORMED),
    ],
)
def test_db_rejections(sql, skills, expected, reason):
    verdict = validate_task(db_candidate(sql, skills, expected))
    assert not verdict.accepted and verdict.reason is reason


def test_db_bad_setup_is_rejected():
    broken = Candidate("db-y", EnvKind.DB, "x", {"table": "t", "headers": ["a"], "rows": [[1, 2]]}, "SELECT a FROM t",
                       {"rows": []}, ("select",))
    assert validate_task(broken).reason is RejectReason.SETUP_FAILED


def os_candidate(solution: str, evaluation: str, skills, init="mkdir -p /w") -> Candidate:
    return Candidate("os-x", EnvKind.OS, "do it", {"init": init}, solution, {"evaluation": evaluation}, tuple(skills))


def test_os_candidate_accepted():
    verdict = validate_task(os_candidate("touch /w/a && chmod 600 /w/a", "test -f /w/a", ["touch", "chmod"]))
    assert verdict.accepted
    assert verdict.task.ground_truth == {"solution": "touch /w/a && chmod 600 /w/a", "evaluation": "test -f /w/a"}


@pytest.mark.parametrize(
    "solution,evaluation,skills,init,reason",
    [
        ("touch /w/a", "exit 2", ["touch"], "mkdir -p /w", RejectReason.EVALUATION_FAILED),
        ("touch /w/a", "true", ["touch"], "mkdir -p /w", RejectReason.TRIVIALLY_PASSING),
        ("touch /w/a", "test -f /w/a", ["touch", "grep"], "mkdir -p /w", RejectReason.SKILL_ABSENT),
        ("touch /w/a && false", "test -f /w/a", ["touch"], "mkdir -p /w", RejectReason.EXECUTION_ERROR),
        ("touch /w/a", "test -f /w/a", ["touch"], "exit 3", RejectReason.SETUP_FAILED),
        ("touch /w/a", "   ", ["touch"], "mkdir -p /w", RejectReason.MALFORMED),
    ],
)
def test_os_rejections(solution, evaluation, skills, init, reason):
    assert validate_task(os_candidate(solution, evaluation, skills, init)).reason is reason


@pytest.mark.parametrize(
    "script,commands",
    [
        ("find /tmp -name '*.tmp' -exec rm {} \\;", {"find", "rm"}),
        ("ls | xargs chmod 600", {"ls", "xargs", "chmod"}),
        ("X=1 sudo /usr/bin/useradd bob; echo $(cat f)", {"useradd", "echo", "cat"}),
        ("if test -d /a; then mkdir /b; fi", {"test", "mkdir", "fi"}),
    ],
)
def test_os_command_detection(script, commands):
    assert commands <= detect_os_commands(script)


def comic_store() -> TripleStore:
    rel = "comic_books.comic_book_issue.characters_on_cover"
    return TripleStore([("m.02ll5h", rel, e) for e in ("m.tintin", "m.snowy", "m.haddock")])


def kg_candidate(actions, skills, expected=None) -> Candidate:
    return Candidate("kg-x", EnvKind.KG, "how many?", {"entities": {}}, list(actions), expected or {}, tuple(skills))


def test_kg_count_example_is_accepted():
    actions = KG_CASES[1][1]
    verdict = validate_task(kg_candidate(actions, ["count", "get_neighbors"], {"count": 3}), store=comic_store())
    assert verdict.accepted
    assert verdict.task.ground_truth == {"count": 3, "actions": actions}
    assert verdict.task.difficulty == 3


def test_kg_rejections():
    store = comic_store()
    actions = KG_CASES[1][1]
    assert validate_task(kg_candidate(actions, ["count"], {"count": 4}), store=store).reason is RejectReason.ANSWER_MISMATCH
    assert validate_task(kg_candidate(actions, ["argmax"]), store=store).reason is RejectReason.SKILL_ABSENT
    empty = ["get_neighbors(m.02ll5h,no.such.relation)"]
    assert validate_task(kg_candidate(empty, ["get_neighbors"]), store=store).reason is RejectReason.EMPTY_ANSWER
    bad = ["count(#4)"]
    assert validate_task(kg_candidate(bad, ["count"]), store=store).reason is RejectReason.EXECUTION_ERROR
    with pytest.raises(ValueError):
        validate_task(kg_candidate(actions, ["count"]))


def test_replay_returns_entity_set():
    assert replay_actions(KG_CASES[1][1][:2], comic_store()) == frozenset({"m.tintin", "m.snowy", "m.haddock"})


def test_ingestion_counts_unsupported_records():
    records = [
        {"qid": 1, "question": "q", "s_expression": KG_CASES[1][0], "count": 3},
        {"qid": 2, "question": "q", "s_expression": "(OR a b)"},
        {"qid": 3, "question": "q"},
    ]
    result = run_ingestion(records, comic_store(), PipelineConfig(env_kind=EnvKind.KG, target_size=1, min_per_skill=0))
    assert result.generated == 3 and len(result.pool) == 1
    assert result.rejected_by_reason == Counter({"unsupported_expression": 2})
    assert [t.task_id for t in result.selected] == ["1"]


# -- sampling ---------------------------------------------------------------------


def test_weight_is_inverse_count_plus_one():
    assert skill_weight(0) == 1.0 and skill_weight(3) == 0.25


def test_uniform_when_counts_equal():
    stats = SkillStats(EnvKind.DB, {s: 5 for s in DB_SKILLS})
    rng, n = random.Random(1), 10_000
    draws = Counter(sample_skill_subset(stats, 1, rng)[0] for _ in range(n))
    p = 1 / len(DB_SKILLS)
    sigma = math.sqrt(n * p * (1 - p))
    for s in DB_SKILLS:
        assert abs(draws[s] - n * p) <= 3 * sigma, s


def test_unseen_skill_dominates():
    rare = DB_SKILLS[3]
    stats = SkillStats(EnvKind.DB, {s: (0 if s == rare else 99) for s in DB_SKILLS})
    rng, n = random.Random(2), 10_000
    p = 1 / (1 + (len(DB_SKILLS) - 1) / 100)
    hits = sum(sample_skill_subset(stats, 1, rng)[0] == rare for _ in range(n))
    assert abs(hits - n * p) <= 3 * math.sqrt(n * p * (1 - p))
    assert hits > n / 2


@given(st.integers(0, 2**32), st.integers(1, 5))
def test_subset_is_distinct_and_seeded(seed, k):
    stats = SkillStats(EnvKind.DB, {s: i % 4 for i, s in enumerate(DB_SKILLS)})
    a = sample_skill_subset(stats, k, random.Random(seed))
    b = sample_skill_subset(stats, k, random.Random(seed))
    assert a == b and len(set(a)) == k and set(a) <= set(DB_SKILLS)


def test_subset_rejects_bad_k():
    stats = SkillStats(EnvKind.DB)
    with pytest.raises(ValueError):
        sample_skill_subset(stats, 0, random.Random(0))
    with pytest.raises(ValueError):
        sample_skill_subset(stats, len(DB_SKILLS) + 1, random.Random(0))


def test_rare_ratio_one_always_starts_rare():
    stats = SkillStats(EnvKind.DB, {s: i for i, s in enumerate(DB_SKILLS)})
    rare = set(stats.rare())
    rng = random.Random(3)
    for _ in range(200):
        picked = sample_with_rare_ratio(stats, 3, rng, 1.0)
        assert picked[0] in rare and len(set(picked)) == 3


def test_stats_reject_foreign_skills():
    with pytest.raises(ValueError):
        SkillStats(EnvKind.DB, {"grep": 1})
    stats = SkillStats(EnvKind.DB)
    with pytest.raises(ValueError):
        stats.add(["grep"])


# -- relatedness ------------------------------------------------------------------


def test_relatedness_example():
    assert relatedness({"a", "b", "c", "d"}, {"a", "b"}) == pytest.approx(0.6667, abs=1e-4)
    assert relatedness({"a"}, {"b"}) == 0.0
    assert relatedness({"a", "b"}, {"b", "a"}) == 1.0


skill_sets = st.frozensets(st.sampled_from(DB_SKILLS), min_size=1, max_size=6)


@given(skill_sets, skill_sets)
def test_relatedness_symmetric_and_bounded(x, y):
    r = relatedness(x, y)
    assert r == pytest.approx(relatedness(y, x))
    assert 0.0 <= r <= 1.0
    assert (r == 1.0) == (x == y)


def test_relatedness_requires_same_environment():
    a = TaskInstance("a", EnvKind.DB, "i", {}, {}, ("select",))
    b = TaskInstance("b", EnvKind.KG, "i", {}, {}, ("count",))
    with pytest.raises(ValueError):
        relatedness(a, b)
    with pytest.raises(ValueError):
        relatedness(set(), {"a"})


# -- selection --------------------------------------------------------------------


def task(i: int, *skills: str) -> TaskInstance:
    return TaskInstance(f"t{i}", EnvKind.DB, "i", {}, {}, skills)


def test_min_zero_takes_pool_prefix():
    pool = [task(i, "select") for i in range(10)]
    assert select_balanced_subset(pool, 4, 0) == pool[:4]


def test_greedy_prefers_short_skills_and_keeps_pool_order():
    pool = [task(0, "select"), task(1, "select"), task(2, "insert", "delete"), task(3, "update")]
    picked = select_balanced_subset(pool, 3, 1, skills=["select", "insert", "delete", "update"])
    assert [t.task_id for t in picked] == ["t0", "t2", "t3"]


def test_missing_skill_is_named():
    pool = [task(i, "select", "insert") for i in range(5)]
    with pytest.raises(InfeasibleSelection) as info:
        select_balanced_subset(pool, 3, 1, skills=["select", "insert", "delete"])
    assert info.value.deficient == {"delete": 0}
    assert "delete (0/1)" in str(info.value)
    assert info.value.to_dict()["min_per_skill"] == 1


def test_target_larger_than_pool_is_infeasible():
    with pytest.raises(InfeasibleSelection):
        select_balanced_subset([task(0, "select")], 2, 0)


@given(st.lists(st.frozensets(st.sampled_from(["a", "b", "c", "d"]), min_size=1), min_size=1, max_size=20),
       st.integers(0, 3), st.integers(0, 20))
def test_selection_meets_constraint_or_explains(skill_lists, minimum, size):
    pool = [task(i, *sorted(s)) for i, s in enumerate(skill_lists)]
    try:
        chosen = select_balanced_subset(pool, size, minimum, skills=["a", "b", "c", "d"])
    except InfeasibleSelection as exc:
        assert size > len(pool) or exc.deficient
        return
    assert len(chosen) == size
    assert chosen == [t for t in pool if t in chosen]
    counts = Counter(s for t in chosen for s in t.skills)
    assert all(counts[s] >= minimum for s in "abcd")


# -- generation -------------------------------------------------------------------


def test_prompt_round_trips_skills():
    prompt = generation_prompt(EnvKind.OS, ["grep", "sed"])
    assert requested_skills(prompt) == ["grep", "sed"]
    with pytest.raises(ValueError):
        generation_prompt(EnvKind.KG, ["count"])


@pytest.mark.parametrize(
    "reply",
    [
        "no json here",
        "```json\n{broken\n```",
        json.dumps({"instruction": "", "setup": {}, "solution": "x"}),
        json.dumps({"instruction": "i", "setup": [], "solution": "x"}),
        json.dumps({"instruction": "i", "setup": {}, "solution": ""}),
        json.dumps({"instruction": "i", "setup": {}, "solution": "x", "difficulty": 3}),
    ],
)
def test_malformed_replies(reply):
    with pytest.raises(MalformedReply):
        parse_candidate(EnvKind.DB, reply, ["select"], "t")


def test_generator_retries_then_gives_up():
    class Down:
        calls = 0

        def complete(self, messages, **kw):
            Down.calls += 1
            raise AgentFailure("down")

    with pytest.raises(Exception, match="failed 3 times"):
        generate_candidate(Down(), ["select"], EnvKind.DB, task_id="t", retries=2)
    assert Down.calls == 3


def test_mock_generator_replies_are_valid_candidates():
    gen = MockDBGenerator(seed=5, malformed_rate=0, wrong_claim_rate=0, failure_rate=0)
    candidate = generate_candidate(gen, ["select", "where_single_condition"], EnvKind.DB, task_id="db-1")
    assert validate_task(candidate).accepted


def test_pipeline_counts_malformed_and_unavailable():
    malformed = run_generation(MockDBGenerator(malformed_rate=1.0, failure_rate=0),
                               PipelineConfig(candidates=12, target_size=0, min_per_skill=0))
    assert malformed.rejected_by_reason == Counter({"malformed_reply": 12})
    down = MockDBGenerator(failure_rate=1.0)
    unavailable = run_generation(down, PipelineConfig(candidates=4, target_size=0, min_per_skill=0, retries=1))
    assert unavailable.rejected_by_reason == Counter({"generator_unavailable": 4})
    assert down.calls == 8


def test_pipeline_refuses_kg_generation():
    with pytest.raises(ValueError):
        run_generation(MockDBGenerator(), PipelineConfig(env_kind=EnvKind.KG))


# -- outputs ------------------------------------------------------------------------


def test_stats_arithmetic():
    pool = [task(i, "select") for i in range(700)]
    result = PipelineResult(pool, pool[:500], 1306, Counter({"answer_mismatch": 606}))
    stats = result.stats()
    assert stats["discarded_or_unselected"] == 806
    assert stats["discarded"] == 606 and stats["unselected"] == 200
    assert stats["discarded"] + stats["unselected"] == stats["discarded_or_unselected"]


def test_review_sample_size_and_order():
    tasks = [task(i, "select") for i in range(25)]
    sample = review_sample(tasks, 0.1, seed=4)
    assert len(sample) == 3
    assert sample == [t for t in tasks if t in sample]
    assert review_sample(tasks, 0.1, seed=4) == sample
    assert review_sample([], 0.1, 0) == [] and len(review_sample(tasks[:10], 0.1, 0)) == 1


def _small_run(tmp_path, name):
    config = PipelineConfig(candidates=80, target_size=20, min_per_skill=0, seed=9)
    result = run_generation(MockDBGenerator(seed=9), config)
    return write_outputs(result, config, tmp_path / name)


def test_outputs_are_byte_deterministic(tmp_path):
    a, b = _small_run(tmp_path, "a"), _small_run(tmp_path, "b")
    assert set(a) == {"pool", "stats", "dataset", "review"}
    for key in a:
        assert a[key].read_bytes() == b[key].read_bytes(), key
    stats = json.loads(a["stats"].read_text())
    assert stats["generated"] == 80 and stats["selected"] == 20
    lines = a["review"].read_text().splitlines()
    assert lines[0].startswith("task_id,skills") and len(lines) == 1 + 2


def test_infeasible_selection_writes_no_dataset(tmp_path):
    config = PipelineConfig(candidates=5, target_size=5, min_per_skill=3, seed=1)
    result = run_generation(MockDBGenerator(seed=1), config)
    assert result.infeasible is not None and result.selected == []
    paths = write_outputs(result, config, tmp_path)
    assert "dataset" not in paths and not (tmp_path / "dataset.jsonl").exists()
    assert "deficient" in json.loads(paths["stats"].read_text())["infeasible"]

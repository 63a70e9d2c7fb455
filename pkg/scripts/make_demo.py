"""Regenerate the bundled demo datasets, scripted agents and fixtures.

Ground truths are produced by the datagen validators, so every shipped task
has been executed once before it is written out.

    python scripts/make_demo.py
"""

from __future__ import annotations

import json
import sqlite3
from pathlib import Path

from lifelong_harness.core import EnvKind, dump_tasks
from lifelong_harness.datagen import Candidate, PipelineConfig, detect_db_skills, run_ingestion, validate_task
from lifelong_harness.datagen.validation import detect_os_commands
from lifelong_harness.environments.db import render_rows
from lifelong_harness.environments.kg import TripleStore
from lifelong_harness.skills import DB_SKILLS, OS_SKILLS

DEMO = Path(__file__).resolve().parents[1] / "src" / "lifelong_harness" / "demo"

# -- DB ------------------------------------------------------------------------

EMPLOYEES = {
    "table": "employees",
    "headers": ["id", "name", "department", "salary"],
    "rows": [
        [1, "Ada", "IT", 7200],
        [2, "Bo", "HR", 4100],
        [3, "Cy", "IT", 6400],
        [4, "Di", "Sales", 5300],
        [5, "Ed", "IT", 8100],
        [6, "Flo", "Sales", 4700],
    ],
}
ORDERS = {
    "table": "orders",
    "headers": ["order_id", "customer", "amount", "status"],
    "rows": [
        [10, "acme", 80, "paid"],
        [11, "globex", 45, "paid"],
        [12, "acme", 60, "open"],
        [13, "initech", 150, "paid"],
        [14, "globex", 20, "open"],
        [15, "umbrella", 95, "paid"],
    ],
}
PAYMENTS = {
    "table": "membership_payments",
    "headers": ["payment_id", "member_id", "payment_date", "amount", "payment_method"],
    "rows": [
        [1, 101, "2023-09-15", 75, "Cash"],
        [2, 103, "2023-09-20", 50, "Credit Card"],
    ],
}
PRODUCTS = {
    "table": "products",
    "headers": ["sku", "title", "price", "stock"],
    "rows": [
        ["A1", "lamp", 25.5, 12],
        ["B2", "desk", 140.0, 3],
        ["C3", "chair", 80.0, 0],
        ["D4", "mug", 6.0, 40],
        ["E5", "shelf", 95.0, 7],
    ],
}
INVENTORY = {
    "table": "inventory",
    "headers": ["item_id", "category", "quantity"],
    "rows": [[i, ["tools", "paint", "garden", "hardware"][i % 4], 5 * i + 3] for i in range(1, 17)],
}

# (task id, setup, instruction, ground-truth SQL, difficulty, agent behaviour)
DB_TASKS = [
    ("db-01", EMPLOYEES, "List the names of IT employees from the highest to the lowest salary.",
     "SELECT name FROM employees WHERE department = 'IT' ORDER BY salary DESC", "easy", "solve"),
    ("db-02", ORDERS, "For each customer whose paid and open orders add up to more than 100, give the customer and that total.",
     "SELECT customer, SUM(amount) AS total FROM orders GROUP BY customer HAVING SUM(amount) > 100", "medium", "solve"),
    ("db-03", PAYMENTS, 'Record a payment of 75 by "Credit Card" for member 102 dated "2023-10-15" (payment id 3).',
     "INSERT INTO membership_payments (payment_id, member_id, payment_date, amount, payment_method) "
     "VALUES (3, 102, '2023-10-15', 75, 'Credit Card')", "easy", "solve"),
    ("db-04", EMPLOYEES, "Give every Sales employee a salary of 5500.",
     "UPDATE employees SET salary = 5500 WHERE department = 'Sales'", "easy", "solve"),
    ("db-05", ORDERS, "Remove all open orders.",
     "DELETE FROM orders WHERE status = 'open'", "easy", "solve"),
    ("db-06", PRODUCTS, "Which two products are the most expensive? Give their titles and prices.",
     "SELECT title, price FROM products ORDER BY price DESC LIMIT 2", "easy", "solve"),
    ("db-07", PRODUCTS, "Skipping the cheapest product, list the titles of the next two cheapest products.",
     "SELECT title FROM products ORDER BY price ASC LIMIT 2 OFFSET 1", "medium", "solve"),
    ("db-08", PRODUCTS, "Which products are in stock and cost less than 100? Give their SKUs.",
     "SELECT sku FROM products WHERE stock > 0 AND price < 100", "medium", "solve"),
    ("db-09", EMPLOYEES, "Who earns more than the company average salary?",
     "SELECT e.name FROM employees AS e WHERE e.salary > (SELECT AVG(salary) FROM employees)", "hard", "solve"),
    ("db-10", ORDERS, "How many paid orders are above 50?",
     "SELECT COUNT(*) FROM orders WHERE status = 'paid' AND amount > 50", "easy", "limit"),
    ("db-11", PAYMENTS, 'Insert a payment for member 102 on "2023-10-15": amount 75, method "Credit Card", payment id 3.',
     "INSERT INTO membership_payments (payment_id, member_id, payment_date, amount, payment_method) "
     "VALUES (3, 102, '2023-10-15', 75, 'Credit Card')", "easy", "unfenced"),
    ("db-12", INVENTORY, "What is the total quantity of garden items?",
     "SELECT SUM(quantity) FROM inventory WHERE category = 'garden'", "easy", "flood"),
]


def _ordered(skills, vocab):
    return tuple(s for s in vocab if s in skills)


def _query_rows(setup, sql):
    con = sqlite3.connect(":memory:")
    headers = setup["headers"]
    con.execute(f"CREATE TABLE {setup['table']} ({', '.join(headers)})")
    con.executemany(f"INSERT INTO {setup['table']} VALUES ({', '.join('?' * len(headers))})", setup["rows"])
    rows = con.execute(sql).fetchall()
    con.close()
    return rows


def _op(sql: str, thought: str) -> str:
    return f"{thought}\nAction: Operation\n```sql\n{sql}\n```"


def build_db():
    tasks, rules = [], []
    for task_id, setup, instruction, sql, difficulty, behaviour in DB_TASKS:
        is_query = sql.lstrip().upper().startswith("SELECT")
        expected = {"rows": [list(r) for r in _query_rows(setup, sql)]} if is_query else {}
        skills = _ordered(detect_db_skills(sql), DB_SKILLS)
        verdict = validate_task(Candidate(task_id, EnvKind.DB, instruction, setup, sql, expected, skills, difficulty))
        assert verdict.accepted, (task_id, verdict)
        tasks.append(verdict.task)
        answer = render_rows(_query_rows(setup, sql)) if is_query else "[]"
        if behaviour == "solve":
            rules.append({"task_id": task_id, "round": 0, "reply": _op(sql, "I will run one statement for this.")})
            rules.append({"task_id": task_id, "round": 1,
                          "reply": f"The statement ran.\nAction: Answer\nFinal Answer: {answer}"})
        elif behaviour == "limit":
            probe = f"SELECT * FROM {setup['table']} LIMIT 1"
            for r in range(3):
                rules.append({"task_id": task_id, "round": r, "reply": _op(probe, "Let me look at the table again.")})
        elif behaviour == "unfenced":
            rules.append({"task_id": task_id, "round": 0, "reply": f"Action: Operation\n{sql};"})
        elif behaviour == "flood":
            flood = "SELECT * FROM inventory a, inventory b, inventory c"
            rules.append({"task_id": task_id, "round": 0, "reply": _op(flood, "I will read everything first.")})
            rules.append({"task_id": task_id, "round": 1, "reply": _op(sql, "Now the sum.")})
    return tasks, {"default": "I am not sure what to do.", "rules": rules}


# -- OS ------------------------------------------------------------------------

TEE_SCRIPT = "\n".join([
    'tee -a /var/log/tee_test.log <<< "Line 1"',
    "find / -print | tee -a /var/log/tee_test.log",
    "hostname | tee -a /var/log/tee_test.log",
    'tee -a /var/log/tee_test.log <<< "Done"',
    "chmod 644 /var/log/tee_test.log",
])

# (task id, instruction, init, solution, evaluation, agent behaviour)
OS_TASKS = [
    ("os-01", "Create the directory /root/project and a file README in it containing the word hello.", "",
     "mkdir -p /root/project && echo hello > /root/project/README", "grep -q hello /root/project/README", "solve"),
    ("os-02", "Make /root/run.sh executable with mode 755.", "echo '#!/bin/bash' > /root/run.sh",
     "chmod 755 /root/run.sh", "stat -c %a /root/run.sh | grep -q 755", "solve"),
    ("os-03", "Count the lines of /root/data.txt and write just the number to /root/count.txt.",
     "echo a > /root/data.txt; echo b >> /root/data.txt; echo c >> /root/data.txt",
     "echo 3 > /root/count.txt", "grep -q '^3$' /root/count.txt", "count"),
    ("os-04", "Delete the directory /tmp/cache together with its contents.", "mkdir -p /tmp/cache && touch /tmp/cache/a.tmp",
     "rm -rf /tmp/cache", "test ! -e /tmp/cache", "solve"),
    ("os-05", "Append the line Done to /var/log/app.log using tee.", "echo start > /var/log/app.log",
     'tee -a /var/log/app.log <<< "Done"', "grep -q Done /var/log/app.log", "solve"),
    ("os-06", "Create an empty directory /root/backup.", "", "mkdir /root/backup", "test -d /root/backup", "skip"),
    ("os-07", "Create the file /root/notes.txt.", "", "touch /root/notes.txt", "test -f /root/notes.txt", "limit"),
    ("os-08", "Append Line 1, a listing of the whole filesystem, the hostname and Done to /var/log/tee_test.log "
     "with tee, then set its mode to 644.", "",
     'tee -a /var/log/tee_test.log <<< "Line 1" && chmod 644 /var/log/tee_test.log',
     "stat -c %a /var/log/tee_test.log | grep -q 644", "flood"),
]

OS_EFFECTS = [
    {"match": r"^find /", "stdout": "drwxr-xr-x root root /usr/share/doc/package\n", "stdout_repeat": 3000},
    {"match": r"^hostname$", "stdout": "demo-host\n"},
]


def _bash(script: str, thought: str) -> str:
    return f"{thought}\n\nAct: bash\n\n```bash\n{script}\n```"


def build_os():
    tasks, rules = [], []
    for task_id, instruction, init, solution, evaluation, behaviour in OS_TASKS:
        skills = _ordered(detect_os_commands(solution), OS_SKILLS)
        setup = {"init": init} if init else {}
        verdict = validate_task(Candidate(task_id, EnvKind.OS, instruction, setup, solution, {"evaluation": evaluation}, skills))
        assert verdict.accepted, (task_id, verdict)
        tasks.append(verdict.task)
        finish = {"task_id": task_id, "reply": "The task is complete.\n\nAct: finish"}
        if behaviour == "solve":
            rules.append({"task_id": task_id, "round": 0, "reply": _bash(solution, "One command does it.")})
            rules.append({**finish, "round": 1})
        elif behaviour == "count":
            rules.append({"task_id": task_id, "round": 0, "reply": _bash("wc -l /root/data.txt", "First count the lines.")})
            rules.append({"task_id": task_id, "round": 1, "reply": _bash(solution, "The file has 3 lines.")})
            rules.append({**finish, "round": 2})
        elif behaviour == "skip":
            rules.append({**finish, "round": 0})
        elif behaviour == "limit":
            for r in range(5):
                rules.append({"task_id": task_id, "round": r, "reply": _bash("ls /root", "Let me check the directory.")})
        elif behaviour == "flood":
            rules.append({"task_id": task_id, "round": 0, "reply": _bash(TEE_SCRIPT, "I will do everything at once.")})
            rules.append({**finish, "round": 1})
    return tasks, {"default": "Act: finish", "rules": rules}


# -- KG ------------------------------------------------------------------------

KG_TRIPLES = [
    ("m.0sch01", "education.educational_institution.parent_institution", "m.0uni01"),
    *[("m.0iss01", "comic_books.comic_book_issue.characters_on_cover", f"m.0chr0{i}") for i in (1, 2, 3)],
    *[("m.0fu01", "fictional_universe.fictional_universe.works_set_here", f"m.0bk0{i}") for i in (1, 2, 3)],
    *[("m.0cr01", "fictional_universe.fictional_character_creator.fictional_characters_created", f"m.0fc0{i}") for i in (1, 2, 3)],
    *[("m.0cr02", "fictional_universe.fictional_character_creator.fictional_characters_created", f"m.0fc0{i}") for i in (2, 3, 4)],
    ("m.0cy01", "meteorology.tropical_cyclone.category", "m.0cat5"),
    *[("m.0cat5", "meteorology.tropical_cyclone_category.tropical_cyclones", f"m.0cy0{i}") for i in (1, 2, 3)],
    *[("m.0gen01", "broadcast.genre.content", f"m.0show0{i}") for i in (1, 2, 3, 4)],
    ("m.0show01", "broadcast.content.producer", "m.0prod1"),
    *[("m.0prod1", "broadcast.producer.produces", f"m.0show0{i}") for i in (1, 3, 5)],
    *[("m.0cow", "food.cheese_milk_source.cheeses", f"m.0ch0{i}") for i in (1, 2, 3)],
    *[("m.0goat", "food.cheese_milk_source.cheeses", f"m.0ch0{i}") for i in (2, 3, 4)],
    *[("m.0soft", "food.cheese_texture.cheeses", f"m.0ch0{i}") for i in (3, 4, 5)],
    ("m.0car01", "automotive.model.automotive_class", "m.0cls1"),
    *[("m.0cls1", "automotive.automotive_class.examples", f"m.0car0{i}") for i in (1, 3, 4)],
    ("m.0car02", "automotive.model.related_models", "m.0sim1"),
    *[("m.0sim1", "automotive.similar_automobile_models.related_model", f"m.0car0{i}") for i in (3, 5)],
    *[("m.0art01", "music.artist.album", f"m.0alb0{i}") for i in (1, 2)],
    *[("m.0team01", "sports.sports_team.roster", f"m.0ply0{i}") for i in (1, 2, 3)],
]
KG_ATTRIBUTES = [
    ("m.0bk01", "book.written_work.copyright_date", 1988),
    ("m.0bk02", "book.written_work.copyright_date", 1975),
    ("m.0bk03", "book.written_work.copyright_date", 2001),
    ("m.0cy01", "meteorology.tropical_cyclone.formed", 2004),
    ("m.0cy02", "meteorology.tropical_cyclone.formed", 2011),
    ("m.0cy03", "meteorology.tropical_cyclone.formed", 1998),
    ("m.0ply01", "sports.pro_athlete.career_start", 2010),
    ("m.0ply02", "sports.pro_athlete.career_start", 2015),
    ("m.0ply03", "sports.pro_athlete.career_start", 2012),
]

# (qid, question, entities, s-expression, expected, agent behaviour)
KG_RECORDS = [
    ("kg-01", "Which institution is Westbrook School of Law part of?", {"Westbrook School of Law": "m.0sch01"},
     "(JOIN (R education.educational_institution.parent_institution) m.0sch01)", {"answer": ["m.0uni01"]}, "solve"),
    ("kg-02", "How many characters appear on the cover of Night Patrol #7?", {"Night Patrol #7": "m.0iss01"},
     "(COUNT (JOIN (R comic_books.comic_book_issue.characters_on_cover) m.0iss01))", {"count": 3}, "solve"),
    ("kg-03", "Which book set in the Hollow Realm has the earliest copyright date?", {"Hollow Realm": "m.0fu01"},
     "(ARGMIN (JOIN (R fictional_universe.fictional_universe.works_set_here) m.0fu01) book.written_work.copyright_date)",
     {"answer": ["m.0bk02"]}, "solve"),
    ("kg-04", "Which characters were created by both Ida Marsh and Tom Reyes?",
     {"Ida Marsh": "m.0cr01", "Tom Reyes": "m.0cr02"},
     "(AND (JOIN (R fictional_universe.fictional_character_creator.fictional_characters_created) m.0cr01) "
     "(JOIN (R fictional_universe.fictional_character_creator.fictional_characters_created) m.0cr02))",
     {"answer": ["m.0fc02", "m.0fc03"]}, "wrong_variable"),
    ("kg-05", "Among cyclones in the same category as Cyclone Vera, which formed most recently?", {"Cyclone Vera": "m.0cy01"},
     "(ARGMAX (JOIN (R meteorology.tropical_cyclone_category.tropical_cyclones) "
     "(JOIN (R meteorology.tropical_cyclone.category) m.0cy01)) meteorology.tropical_cyclone.formed)",
     {"answer": ["m.0cy02"]}, "solve"),
    ("kg-06", "How many drama shows were made by the producer of Harbor Lights?",
     {"drama": "m.0gen01", "Harbor Lights": "m.0show01"},
     "(COUNT (AND (JOIN (R broadcast.genre.content) m.0gen01) "
     "(JOIN (R broadcast.producer.produces) (JOIN (R broadcast.content.producer) m.0show01))))",
     {"count": 2}, "wrong_count"),
    ("kg-07", "Which soft cheese is made from both cow and goat milk?",
     {"cow": "m.0cow", "goat": "m.0goat", "soft": "m.0soft"},
     "(AND food.cheese (AND (JOIN (R food.cheese_milk_source.cheeses) m.0cow) "
     "(AND (JOIN (R food.cheese_milk_source.cheeses) m.0goat) (JOIN (R food.cheese_texture.cheeses) m.0soft))))",
     {"answer": ["m.0ch03"]}, "solve"),
    ("kg-08", "Which car shares a class with the Rover S and is similar to the Tanto?",
     {"Rover S": "m.0car01", "Tanto": "m.0car02"},
     "(AND (JOIN (R automotive.automotive_class.examples) (JOIN (R automotive.model.automotive_class) m.0car01)) "
     "(JOIN (R automotive.similar_automobile_models.related_model) (JOIN (R automotive.model.related_models) m.0car02)))",
     {"answer": ["m.0car03"]}, "no_action"),
    ("kg-09", "Which albums did Lena Fox release?", {"Lena Fox": "m.0art01"},
     "(JOIN (R music.artist.album) m.0art01)", {"answer": ["m.0alb01", "m.0alb02"]}, "solve"),
    ("kg-10", "Which player on the Riverside Owls roster started their career last?", {"Riverside Owls": "m.0team01"},
     "(ARGMAX (JOIN (R sports.sports_team.roster) m.0team01) sports.pro_athlete.career_start)",
     {"answer": ["m.0ply02"]}, "solve"),
]


def _spaced(action: str) -> str:
    return action.replace(",", ", ")


def build_kg():
    lines = [f"{s}\t{r}\t{o}" for s, r, o in KG_TRIPLES] + [f"{e}\t{a}\t{v}" for e, a, v in KG_ATTRIBUTES]
    (DEMO / "kg").mkdir(parents=True, exist_ok=True)
    (DEMO / "kg" / "store.tsv").write_text("\n".join(lines) + "\n", encoding="utf-8")
    store = TripleStore.from_tsv(DEMO / "kg" / "store.tsv")
    records = []
    for qid, question, entities, sexpr, expected, _ in KG_RECORDS:
        records.append({"qid": qid, "question": question, "entities": entities, "s_expression": sexpr, **expected})
    with open(DEMO / "kg" / "records.jsonl", "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    result = run_ingestion(records, store, PipelineConfig(env_kind=EnvKind.KG, target_size=len(records), min_per_skill=0))
    assert len(result.selected) == len(records), result.stats()
    rules = []
    for task, (_, _, _, _, expected, behaviour) in zip(result.selected, KG_RECORDS):
        actions = task.ground_truth["actions"]
        if behaviour == "no_action":
            rules.append({"task_id": task.task_id, "round": 0, "reply": "I believe it is the sedan, but I will not call a tool."})
            continue
        for r, action in enumerate(actions):
            rules.append({"task_id": task.task_id, "round": r, "reply": f"Thought: next step.\nAction: {_spaced(action)}"})
        n_vars = sum(1 for a in actions if a.split("(")[0] in {"get_neighbors", "intersection", "argmax", "argmin"})
        if "count" in expected:
            final = str(expected["count"] + (2 if behaviour == "wrong_count" else 0))
        else:
            final = "#0" if behaviour == "wrong_variable" else f"#{n_vars - 1}"
        rules.append({"task_id": task.task_id, "round": len(actions), "reply": f"Thought: done.\nFinal Answer: {final}"})
    return result.selected, {"default": "Final Answer: #0", "rules": rules}


def _write(path: Path, data) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, indent=1) + "\n", encoding="utf-8")


def main() -> None:
    for name, build in (("db", build_db), ("os", build_os), ("kg", build_kg)):
        tasks, script = build()
        (DEMO / name).mkdir(parents=True, exist_ok=True)
        dump_tasks(tasks, DEMO / name / "tasks.jsonl")
        _write(DEMO / name / "agent.json", script)
    _write(DEMO / "os" / "effects.json", OS_EFFECTS)
    print(f"demo data written to {DEMO}")


if __name__ == "__main__":
    main()

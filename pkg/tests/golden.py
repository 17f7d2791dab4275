"""Shared golden data: the sms_statuses table, the events example and their scripted model responses.

Run ``python tests/golden.py`` to regenerate ``tests/data/fixtures`` after
changing anything here; ``test_fixtures_are_current`` fails until you do.
"""

from __future__ import annotations

import json
import shutil
import sys
from pathlib import Path

from ragsql.providers import FixtureLLM

DATA = Path(__file__).parent / "data"
DOCS_DIR = DATA / "docs"
FIXTURES_DIR = DATA / "fixtures"
EXAMPLES_FILE = DATA / "events.jsonl"
BOTH_EXAMPLES_FILE = DATA / "two_examples.json"

SMS_RAW = (DOCS_DIR / "sms_statuses.md").read_text(encoding="utf-8")

EVENTS_QUESTION = (
    "Show me a list of events in the past month including name, permalink, start date, end date, and RSVP count"
)
# trailing space after "start_date," is part of the reference snippet
EVENTS_SQL = (
    "SELECT title AS name, permalink, start_at AS start_date, \n"
    "       end_at AS end_date, rsvp_count\n"
    "FROM events\n"
    "WHERE\n"
    "  start_at >= DATEADD(month, -1, GETDATE())\n"
    "  AND start_at < GETDATE();"
)
EVENTS_NORMALIZED = (
    "Retrieve a list of events over a defined timeframe including their name, permalink, start date, end date, "
    "and RSVP count"
)
EVENTS_ENTITY = "list of events with their characteristics"
EVENTS_MAIN_CLAUSE = "list of events in the past month"
EVENTS_DETAILS = "including name, permalink, start date, end date, and RSVP count"
EVENTS_VARIATIONS = [
    "Provide a list of events occurring within a specified time range, including their names, permalinks, "
    "start dates, end dates, and the number of RSVPs.",
    "Can you give me the details of events within a certain period, listing their name, permalink, start date, "
    "end date, and RSVP count?",
    "Generate a report of events within a certain period, showing their name, permalink, start date, end date, "
    "and number of RSVPs",
]

# reworded question whose normalized form matches the stored one
PARAPHRASE = "Which events took place last month? I need name, permalink, start date, end date and RSVP count."
PARAPHRASE_MAIN = "events that took place last month"

CLIMATE_QUESTION = "How many people RSVP'd to the climate march event last month?"
# the reference snippet breaks off inside the LIKE pattern; the literal is reconstructed
CLIMATE_SQL = (
    "SELECT COUNT(rsvps.id)\n"
    "FROM rsvps\n"
    "JOIN events ON rsvps.event_id = events.id\n"
    "WHERE events.name LIKE '%climate march%'\n"
    "AND events.start_date BETWEEN DATE_SUB(CURDATE(), INTERVAL 2 MONTH) \n"
    "AND DATE_SUB(CURDATE(), INTERVAL 1 MONTH)"
)

CLIMATE_NORMALIZED = "Count the people who signed up for a named event within a given month"
CLIMATE_MAIN_CLAUSE = "how many people signed up for the event"
CLIMATE_VARIATIONS = [
    "How many sign-ups did a specific event receive during a given month?",
    "Give the number of attendees registered for a named event in a chosen month",
    "What is the RSVP total for a particular event held in a certain month?",
]
CLIMATE_STRUCTURE = {
    "normalized": CLIMATE_NORMALIZED,
    "entities": [{"label": "RSVP count", "kind": "metric"}, {"label": "event name", "kind": "identifier"}],
    "data_sources": [
        {"table": "rsvps", "columns": ["id", "event_id"]},
        {"table": "events", "columns": ["id", "name", "start_date"]},
    ],
    "operations": [{"operation": "count", "target": "rsvps.id"}],
}

SMS_ENTITY_RUNS = [
    ["subscription status", "activist", "group", "mobile messaging list", "join date"],
    ["Subscription Status", "activist", "group", "subscription timestamp"],
    ["subscription status", "activist", "group", "mobile messaging list"],
    ["subscription status", "Activist", "group", "spam complaint"],
    ["subscription  status", "activists", "group", "mobile messaging list"],
]
SMS_ENTITIES = ["group", "subscription status", "activist", "mobile messaging list"]
SMS_STRONG = ["group", "subscription status"]


def sms_columns() -> list[dict[str, str]]:
    """Column/description pairs read off the markdown field table."""
    cols = []
    for line in SMS_RAW.splitlines():
        cells = [c.strip() for c in line.strip().strip("|").split("|")]
        if len(cells) >= 2 and cells[0] not in ("Field Name", "---") and line.startswith("|"):
            cols.append({"column": cells[0], "description": cells[1]})
    return cols


SMS_STRUCTURED = {
    "name": "sms_statuses",
    "summary": "Data about the mobile subscription statuses of activists within groups.",
    "purpose": "To track and manage the subscription statuses (subscribed, unsubscribed, bouncing, etc) of "
    "activists to mobile messaging lists.",
    "dependencies_thoughts": "Relates to the `users` table (subscriber_id to id) and the `groups` table "
    "(group_id to id)",
    "keys": ["subscriber_id", "group_id"],
    "connected_tables": ["users", "groups"],
    "columns": sms_columns(),
}

EVENTS_STRUCTURE = {
    "normalized": EVENTS_NORMALIZED,
    "entities": [{"label": EVENTS_ENTITY, "kind": "category"}],
    "data_sources": [{"table": "events", "columns": ["title", "permalink", "start_at", "end_at", "rsvp_count"]}],
    "operations": [{"operation": "filter", "target": "start_at", "condition": "within the past month"}],
}


def golden_llm() -> FixtureLLM:
    llm = FixtureLLM()
    llm.script("structure_document", {"raw_text": SMS_RAW}, SMS_STRUCTURED)
    llm.script("extract_entities", {"name": "sms_statuses"}, responses=[{"entities": r} for r in SMS_ENTITY_RUNS])
    # training: question with SQL
    llm.script("normalize", {"question": EVENTS_QUESTION, "sql": EVENTS_SQL}, EVENTS_STRUCTURE)
    llm.script("split_main_clause", {"question": EVENTS_QUESTION},
               {"main_clause": EVENTS_MAIN_CLAUSE, "details": EVENTS_DETAILS})
    llm.script("generate_variations", {"normalized": EVENTS_NORMALIZED, "k": "3"}, {"variations": EVENTS_VARIATIONS})
    # asking: questions arrive without SQL
    llm.script("normalize", {"question": EVENTS_QUESTION, "sql": ""}, {**EVENTS_STRUCTURE, "data_sources": []})
    llm.script("normalize", {"question": PARAPHRASE, "sql": ""}, {**EVENTS_STRUCTURE, "data_sources": []})
    llm.script("split_main_clause", {"question": PARAPHRASE},
               {"main_clause": PARAPHRASE_MAIN, "details": "name, permalink, start date, end date and RSVP count"})
    llm.script("generate_sql_examples", {"question": PARAPHRASE}, {"sql": EVENTS_SQL, "notes": "reused example"})
    # second example, used where two example groups are needed
    llm.script("normalize", {"question": CLIMATE_QUESTION, "sql": CLIMATE_SQL}, CLIMATE_STRUCTURE)
    llm.script("split_main_clause", {"question": CLIMATE_QUESTION},
               {"main_clause": CLIMATE_MAIN_CLAUSE, "details": "climate march event, last month"})
    llm.script("generate_variations", {"normalized": CLIMATE_NORMALIZED, "k": "3"}, {"variations": CLIMATE_VARIATIONS})
    return llm


def write_examples_file() -> None:
    EXAMPLES_FILE.write_text(json.dumps({"question": EVENTS_QUESTION, "sql": EVENTS_SQL}) + "\n", encoding="utf-8")
    both = [{"question": EVENTS_QUESTION, "sql": EVENTS_SQL}, {"question": CLIMATE_QUESTION, "sql": CLIMATE_SQL}]
    BOTH_EXAMPLES_FILE.write_text(json.dumps(both, indent=2) + "\n", encoding="utf-8")


def regenerate(root: Path = FIXTURES_DIR) -> list[Path]:
    if root.exists():
        shutil.rmtree(root)
    write_examples_file()
    return golden_llm().save(root)


if __name__ == "__main__":
    written = regenerate()
    print(f"wrote {len(written)} fixtures to {FIXTURES_DIR}", file=sys.stderr)

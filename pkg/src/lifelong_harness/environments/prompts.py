"""Environment preambles.

The DB and OS preambles are parsing contracts: agents are told which literal
markers the harness matches, so the text must stay byte-stable. Only the round
count is parameterised, and its default reproduces the canonical wording.
"""

from __future__ import annotations

_DB_TEMPLATE = (
    "I will ask you a question, then you should help me operate a MySQL database with SQL to answer the question.\n"
    "You have to explain the problem and your solution to me and write down your thoughts.\n"
    "After thinking and explaining thoroughly, every round you can choose one of the two actions: Operation or Answer.\n"
    "\n"
    "To do operation, the format should be like this:\n"
    "Action: Operation\n"
    "```sql\n"
    "SELECT * FROM table WHERE condition;\n"
    "```\n"
    "You MUST put SQL in markdown format without any other comments. Your SQL should be in one line.\n"
    'I will use "Action: Operation" literally to match your SQL.\n'
    "Every time you can only execute one SQL statement. I will only execute the statement in the first SQL code block. "
    "Every time you write a SQL, I will execute it for you and give you the output.\n"
    "If the SQL is not executed successfully, the response will be the error message.\n"
    "Otherwise, the response will be the raw MySQL response.\n"
    'For SELECT queries, the response will be the result of the query, such as [(1, "John Doe", "HR"), '
    '(2, "Jane Smith", "IT"), ...], where each tuple represents a row and the elements are the values of the '
    "columns in the row.\n"
    "For SQL such as INSERT, UPDATE, and DELETE, the response will be an empty list [] indicating that the SQL "
    "was executed successfully.\n"
    "\n"
    "If you have obtain the answer by interacting with the database, and you MUST commit your final answer "
    "using the format like this:\n"
    "Action: Answer\n"
    'Final Answer: [(1, "John Doe", "HR"), (2, "Jane Smith", "IT"), ...]\n'
    "DO NOT write this pattern unless you are sure about your answer. I expect an accurate and correct answer.\n"
    "Your answer should be accurate. Your answer must be exactly the same as the correct answer.\n"
    "If the question is about modifying the database, then after done operation, your answer field can be anything.\n"
    "If the question is about querying the database, then after done operation, your answer field should be the "
    "result of the query.\n"
    "We note that the column names will not be displayed in the result, and you need to ensure both the orders "
    "of the columns and rows are correct.\n"
    "If your response cannot match any pattern I mentioned earlier, you will be judged as FAIL immediately.\n"
    "Once you commit your answer or the number of rounds reaches {rounds}, the task will be finished and the "
    "system will judge whether you pass the task or not.\n"
    "\n"
    "Now, I will give you the question that you need to solve."
)

_OS_TEMPLATE = (
    "I will provide you with a task to perform on a Linux (Ubuntu) system. Your objective is to complete the "
    "task by executing the appropriate Bash commands.\n"
    "\n"
    "### Interaction Rules:\n"
    "1. **Thorough Analysis and Reasoning**:\n"
    "    - Before performing any action, carefully analyze the task and explain your thought process.\n"
    "    - Include a detailed explanation of the logic behind your choice of commands and approach.\n"
    "\n"
    "2. **Action Choices**:\n"
    "   - At the end of your reasoning, select **one and only one action** for each turn.\n"
    '     - **"bash"**: When you need to execute a command or perform an operation, provide the corresponding '
    "Bash code. Structure your response as:\n"
    "        Act: bash\n"
    "        ```bash\n"
    "        # Your Bash command(s) here\n"
    "        ```\n"
    '     - **"finish"**: When the task is complete and no further action is required, conclude with:\n'
    "        Act: finish\n"
    "\n"
    "3. **Other Guidelines**:\n"
    '    - I will use "Act: bash" and "Act: finish" literally to determine whether your action is to execute '
    "commands or conclude the task.\n"
    "    - Use the provided format accurately and consistently.\n"
    "    - Ensure all Bash commands are compatible with Linux (Ubuntu) systems.\n"
    "    - Avoid interactive operations (e.g., read, readline) in your Bash commands.\n"
    "\n"
    "4. **Task Completion**:\n"
    '    - The task will conclude either when you select the "finish" action or when the number of rounds '
    "reaches {rounds}.\n"
    "    - The system will evaluate your performance to determine if the task was successfully completed.\n"
    "\n"
    "Now, I will give you the question that you need to solve."
)

_KG_TEMPLATE = (
    "You are an agent that answers questions over a knowledge base by calling tools.\n"
    "Every round, reply with your reasoning followed by exactly one action on its own line.\n"
    "\n"
    "Available actions:\n"
    "get_relations(x): lists the relations leaving entity or variable x.\n"
    "get_neighbors(x, r): creates a new variable holding the entities reached from x by relation r.\n"
    "intersection(v1, v2): creates a new variable holding the entities present in both variables.\n"
    "get_attributes(v): lists the numeric attributes defined on entities of variable v.\n"
    "argmax(v, a): creates a new variable holding the entities of v with the largest value of attribute a.\n"
    "argmin(v, a): creates a new variable holding the entities of v with the smallest value of attribute a.\n"
    "count(v): returns the number of entities in variable v.\n"
    "\n"
    "Entities are written as ids such as m.03hd1z. Variables are named #0, #1, ... in creation order.\n"
    "When you know the answer, reply with:\n"
    "Final Answer: #k\n"
    "where #k is the variable holding the answer, or the integer itself for counting questions.\n"
    "The task ends when you commit an answer or the number of rounds reaches {rounds}.\n"
    "\n"
    "Now, I will give you the question that you need to solve."
)


def db_preamble(rounds: int = 3) -> str:
    return _DB_TEMPLATE.format(rounds=rounds)


def os_preamble(rounds: int = 5) -> str:
    return _OS_TEMPLATE.format(rounds=rounds)


def kg_preamble(rounds: int = 15) -> str:
    return _KG_TEMPLATE.format(rounds=rounds)


def db_question(instruction: str, table: str, headers: list[str]) -> str:
    return f"{instruction}\nThe name of this table is {table}, and the headers of this table are {', '.join(headers)}."


def kg_question(instruction: str, entities: dict[str, str]) -> str:
    if not entities:
        return instruction
    listing = ", ".join(f"{name}: {eid}" for name, eid in entities.items())
    return f"{instruction}\nEntities: [{listing}]"


OS_OBSERVATION_PREFIX = "The output of the OS:\n\n"

AGENT_ACK = "OK."

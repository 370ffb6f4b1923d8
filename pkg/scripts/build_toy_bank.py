"""Regenerate the bundled toy question bank and curriculum snippets.

    python3 scripts/build_toy_bank.py

Items are templated so every grade 1-9 has easy, medium and hard questions
of both types. Output is deterministic.
"""

from __future__ import annotations

import json
import random
from fractions import Fraction
from pathlib import Path

DATA = Path(__file__).resolve().parents[1] / "src" / "qgflow" / "data"

CURRICULUM = [
    ("addition", 1, 2, "Add whole numbers within 100 using place value, counting on and making ten."),
    ("subtraction", 1, 2, "Subtract within 100; relate subtraction to addition and check answers by adding back."),
    ("multiplication", 2, 4, "Multiplication as equal groups and arrays; recall times tables up to 10 x 10."),
    ("division", 3, 4, "Division as sharing and grouping; interpret remainders in word problems."),
    ("fractions", 3, 5, "Fractions as parts of a whole and points on a number line; compare and find equivalent fractions."),
    ("decimals", 4, 6, "Read, write and compare decimals to thousandths; connect tenths and hundredths to fractions."),
    ("repeating decimals", 5, 7, "A fraction whose denominator has prime factors other than 2 and 5 gives a repeating decimal; the repeating block (cycle) can be found by long division."),
    ("long division", 4, 6, "Long division with multi-digit divisors; remainders that recur signal a repeating decimal."),
    ("area", 3, 6, "Area of rectangles, triangles and composite shapes measured in square units."),
    ("perimeter", 3, 5, "Perimeter as the distance around a shape; relate to side lengths of polygons."),
    ("ratio", 6, 7, "Ratios and rates; equivalent ratios and unit rate problems using tables and double number lines."),
    ("percentages", 6, 8, "Percent as a rate per hundred; percent of a quantity, discounts and percent change."),
    ("linear equations", 7, 9, "Solve one-variable linear equations; model word problems with equations and check solutions."),
    ("integers", 6, 7, "Negative numbers on the number line; add, subtract, multiply and divide integers."),
    ("pythagorean theorem", 8, 9, "In a right triangle the square of the hypotenuse equals the sum of the squares of the legs."),
    ("probability", 7, 9, "Probability of simple events as favourable outcomes over equally likely outcomes."),
    ("linear functions", 8, 9, "Slope as rate of change; write y = kx + b from two points or a table."),
    ("quadratic equations", 9, 9, "Solve quadratics by factoring and the quadratic formula; interpret roots."),
]

COMPETENCY = {
    "easy": "computation",
    "medium": "reasoning",
    "hard": "modeling",
}


def _mc(rng: random.Random, answer: str, wrong: list[str]) -> list[str]:
    opts = [answer, *[w for w in wrong if w != answer]][:4]
    rng.shuffle(opts)
    return opts


def items(rng: random.Random):
    # (grade, concept, difficulty, stem, answer, distractors, rationale)
    yield 1, "addition", "easy", "What is 7 + 5?", "12", ["11", "13", "2"], "7 + 3 makes 10, plus 2 more is 12."
    yield 1, "addition", "medium", "Tom has 8 apples and picks 6 more. How many apples does he have now?", "14", ["13", "2", "15"], "8 + 6 = 14."
    yield 1, "subtraction", "hard", "A bus had 15 people. 6 got off and 4 got on. How many people are on the bus?", "13", ["5", "25", "11"], "15 - 6 + 4 = 13."
    yield 2, "subtraction", "easy", "What is 52 - 17?", "35", ["45", "25", "69"], "52 - 17 = 35."
    yield 2, "multiplication", "medium", "There are 4 boxes with 6 pencils each. How many pencils are there?", "24", ["10", "20", "28"], "4 groups of 6 is 24."
    yield 2, "addition", "hard", "Mia saved 23 coins on Monday and 9 more than that on Tuesday. How many coins did she save in total?", "55", ["32", "41", "64"], "Tuesday is 32, so 23 + 32 = 55."
    yield 3, "multiplication", "easy", "What is 9 x 7?", "63", ["56", "72", "64"], "9 x 7 = 63."
    yield 3, "division", "medium", "29 stickers are shared equally among 4 children. How many stickers are left over?", "1", ["7", "3", "0"], "4 x 7 = 28, remainder 1."
    yield 3, "fractions", "hard", "A pizza is cut into 8 equal slices. Ana eats 3 slices and Ben eats 2. What fraction of the pizza is left?", "3/8", ["5/8", "1/2", "3/5"], "8 - 5 = 3 slices left out of 8."
    yield 3, "perimeter", "medium", "A rectangle is 6 cm long and 4 cm wide. What is its perimeter in cm?", "20", ["24", "10", "14"], "2 x (6 + 4) = 20."
    yield 4, "fractions", "easy", "Which fraction is equivalent to 2/3?", "4/6", ["3/4", "2/6", "6/8"], "Multiply top and bottom by 2."
    yield 4, "decimals", "medium", "Order from least to greatest: 0.45, 0.5, 0.405. Which is the least?", "0.405", ["0.45", "0.5", "0.54"], "0.405 < 0.45 < 0.5."
    yield 4, "area", "hard", "An L-shaped garden is made of a 5 m by 4 m rectangle and a 3 m by 2 m rectangle. What is its area in square metres?", "26", ["20", "18", "14"], "20 + 6 = 26."
    yield 4, "long division", "medium", "What is 744 divided by 6?", "124", ["114", "134", "120"], "6 x 124 = 744."
    yield 5, "decimals", "easy", "Write 3/4 as a decimal.", "0.75", ["0.34", "0.7", "0.43"], "3 divided by 4 is 0.75."
    yield 5, "repeating decimals", "easy", "Write 1/3 as a decimal.", "0.333...", ["0.3", "0.13", "3.3"], "Long division gives a remainder of 1 every step, so 3 repeats."
    yield 5, "repeating decimals", "medium", "What is the repeating block of the decimal for 5/11?", "45", ["54", "5", "454"], "5/11 = 0.4545..., so the cycle is 45."
    yield 5, "repeating decimals", "hard", "What is the 20th digit after the decimal point in the decimal for 3/7?", "2", ["4", "8", "5"], "3/7 = 0.428571... has a 6-digit cycle and 20 = 3 x 6 + 2, so it is the 2nd cycle digit."
    yield 5, "long division", "hard", "When 1 is divided by 6 using long division, which remainder keeps recurring?", "4", ["1", "2", "6"], "1/6 = 0.1666..., remainder 4 recurs."
    yield 5, "fractions", "medium", "Compute 2/5 + 1/4.", "13/20", ["3/9", "3/20", "1/2"], "8/20 + 5/20 = 13/20."
    yield 5, "area", "easy", "What is the area of a triangle with base 10 cm and height 6 cm in square cm?", "30", ["60", "16", "32"], "10 x 6 / 2 = 30."
    yield 6, "ratio", "easy", "A recipe uses 2 cups of flour for every 3 cups of milk. How many cups of milk go with 6 cups of flour?", "9", ["4", "12", "8"], "Scale 2:3 by 3."
    yield 6, "percentages", "medium", "A jacket costs 80 dollars and is 25% off. What is the sale price in dollars?", "60", ["20", "55", "75"], "25% of 80 is 20."
    yield 6, "integers", "hard", "The temperature was -7 degrees at night and rose 12 degrees, then fell 8 degrees. What is the final temperature?", "-3", ["3", "-27", "13"], "-7 + 12 - 8 = -3."
    yield 6, "decimals", "hard", "A bottle holds 1.25 litres. How many litres do 8 bottles hold?", "10", ["9.2", "10.25", "12.5"], "1.25 x 8 = 10."
    yield 6, "repeating decimals", "medium", "Write 0.777... as a fraction in lowest terms.", "7/9", ["7/10", "77/100", "7/99"], "Let x = 0.777..., 10x - x = 7."
    yield 6, "integers", "easy", "What is -4 x -6?", "24", ["-24", "-10", "10"], "A negative times a negative is positive."
    yield 7, "linear equations", "easy", "Solve 3x + 5 = 20.", "5", ["15", "25/3", "4"], "3x = 15."
    yield 7, "percentages", "hard", "A price rises 20% and then falls 20%. By what percent did it change overall? (Answer as a signed percent.)", "-4%", ["0%", "4%", "-20%"], "1.2 x 0.8 = 0.96."
    yield 7, "probability", "medium", "A bag holds 3 red and 5 blue marbles. What is the probability of drawing red?", "3/8", ["3/5", "5/8", "1/3"], "3 favourable out of 8."
    yield 7, "ratio", "hard", "Two numbers are in ratio 3:5 and their sum is 64. What is the larger number?", "40", ["24", "39", "32"], "64/8 = 8, 5 x 8 = 40."
    yield 7, "repeating decimals", "hard", "Write 0.1363636... as a fraction in lowest terms.", "3/22", ["136/999", "15/110", "1/8"], "100x - x style subtraction gives 13.5/99 = 3/22."
    yield 7, "integers", "medium", "What is (-18) / 3 + 4?", "-2", ["-10", "2", "10"], "-6 + 4 = -2."
    yield 8, "pythagorean theorem", "easy", "A right triangle has legs 6 and 8. How long is the hypotenuse?", "10", ["14", "12", "100"], "36 + 64 = 100."
    yield 8, "linear functions", "medium", "A line passes through (0, 3) and (2, 7). What is its slope?", "2", ["4", "3", "1/2"], "(7 - 3) / 2 = 2."
    yield 8, "pythagorean theorem", "hard", "A 13 m ladder leans on a wall with its foot 5 m from the wall. How high up the wall does it reach in metres?", "12", ["8", "18", "14"], "169 - 25 = 144."
    yield 8, "linear equations", "medium", "Solve 2(x - 3) = x + 4.", "10", ["7", "1", "-2"], "2x - 6 = x + 4."
    yield 8, "probability", "hard", "Two fair dice are rolled. What is the probability the sum is 7?", "1/6", ["7/36", "1/12", "1/36"], "6 of 36 outcomes."
    yield 8, "percentages", "easy", "What is 15% of 240?", "36", ["24", "30", "16"], "0.15 x 240 = 36."
    yield 9, "quadratic equations", "easy", "Solve x^2 = 49 for the positive root.", "7", ["49", "24.5", "-7"], "7 x 7 = 49."
    yield 9, "quadratic equations", "medium", "What is the sum of the roots of x^2 - 5x + 6 = 0?", "5", ["6", "-5", "1"], "Roots 2 and 3."
    yield 9, "linear functions", "hard", "A taxi charges a fixed fee plus a rate per km. 4 km costs 14 and 10 km costs 29. What is the fixed fee?", "4", ["2.5", "3.5", "10"], "Rate 15/6 = 2.5, fee 14 - 10 = 4."
    yield 9, "probability", "easy", "A fair coin is tossed twice. What is the probability of two heads?", "1/4", ["1/2", "1/3", "3/4"], "1/2 x 1/2."
    yield 9, "quadratic equations", "hard", "A rectangle's length is 3 more than its width and its area is 40. What is its width?", "5", ["8", "4", "10"], "w(w + 3) = 40 gives w = 5."
    yield 9, "pythagorean theorem", "medium", "What is the distance between (1, 2) and (4, 6)?", "5", ["7", "25", "3"], "sqrt(9 + 16) = 5."
    # templated fraction-to-decimal drills fill out the grade 5-7 strands
    for den in (3, 6, 7, 9, 11, 12, 13, 15):
        num = rng.randint(1, den - 1)
        while Fraction(num, den).denominator != den:
            num = rng.randint(1, den - 1)
        digits = _decimal(num, den, 12)
        grade = rng.choice((5, 6, 7))
        diff = rng.choice(("easy", "medium", "hard"))
        yield grade, "repeating decimals", diff, f"Write {num}/{den} as a decimal (show at least twelve decimal places).", digits, [digits[:-1] + "0", f"0.{num}{den}", f"{num / den:.2f}"], f"Long division of {num} by {den}."
    for a, b in ((12, 7), (35, 18), (64, 29), (103, 48), (250, 125), (77, 38)):
        grade = rng.choice((1, 2, 3))
        diff = rng.choice(("easy", "medium", "hard"))
        yield grade, rng.choice(("addition", "subtraction")), diff, f"Compute {a} + {b} - {b // 2}.", str(a + b - b // 2), [str(a + b), str(a - b // 2), str(a + b + 1)], "Left to right."


def _decimal(num: int, den: int, places: int) -> str:
    whole, rem = divmod(num, den)
    out = []
    for _ in range(places):
        rem *= 10
        d, rem = divmod(rem, den)
        out.append(str(d))
    return f"{whole}." + "".join(out)


def main() -> None:
    rng = random.Random(20240)
    DATA.mkdir(parents=True, exist_ok=True)
    rows = []
    for i, (grade, concept, diff, stem, answer, wrong, why) in enumerate(items(rng)):
        mc = i % 2 == 0
        rec = {
            "source_id": f"toy-{i:03d}",
            "grade": grade,
            "knowledge_concepts": [concept],
            "difficulty": diff,
            "competency": COMPETENCY[diff],
            "question_type": "multiple_choice" if mc else "fill_in_blank",
            "stem": stem,
            "answer": answer,
            "rationale": why,
        }
        if mc:
            rec["options"] = _mc(rng, answer, wrong)
        rows.append(rec)
    with open(DATA / "toy_bank.jsonl", "w", encoding="utf-8") as fh:
        for r in rows:
            fh.write(json.dumps(r, ensure_ascii=False) + "\n")
    with open(DATA / "curriculum.jsonl", "w", encoding="utf-8") as fh:
        for concept, lo, hi, text in CURRICULUM:
            fh.write(json.dumps({"concept": concept, "min_grade": lo, "max_grade": hi, "text": text}) + "\n")
    print(f"wrote {len(rows)} bank items, {len(CURRICULUM)} curriculum snippets to {DATA}")


if __name__ == "__main__":
    main()

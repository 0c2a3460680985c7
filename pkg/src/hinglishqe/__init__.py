"""Quality estimation for synthetically generated code-mixed Hinglish text.

Trains and evaluates a dual Bi-LSTM fusion model that predicts, for each
(English, Hindi, Hinglish) triple, either the Average Rating (1-10) assigned
by human annotators or their Disagreement score (0-9). Ships as a library
plus the ``hinglishqe`` command line tool.
"""

__version__ = "0.1.0"

TASK_AVERAGE_RATING = "average_rating"
TASK_DISAGREEMENT = "disagreement"
TASKS = (TASK_AVERAGE_RATING, TASK_DISAGREEMENT)

"""Provide retry call back."""

import logging
from collections.abc import Callable

from tenacity import RetryCallState

logger = logging.getLogger()


class RetryCallback:
    def __init__(self) -> None:
        self.label = ""

    def pre_call(self, label: str) -> None:
        self.label = label

    def before(self, _: RetryCallState) -> None: ...

    def after(self, retry_state: RetryCallState) -> None:
        if outcome := retry_state.outcome:
            logger.info(
                "Quadrature: %s: Attempt %s ended with: %s",
                self.label,
                retry_state.attempt_number,
                outcome.exception(),
            )


RetryCallbackFactory = Callable[[], RetryCallback]

# ruff: noqa: D100, D101, D102, D103, D104, D107, N999
from __future__ import annotations

import asyncio
from typing import TYPE_CHECKING, Callable, TypeVarTuple, Unpack

from typing_extensions import TypeVar

if TYPE_CHECKING:
    from asyncio import Future
    from concurrent.futures import Executor


T = TypeVar('T', infer_variance=True)
Ts = TypeVarTuple('Ts')


def run_in_executor(
    executor: Executor | None,
    task: Callable[[Unpack[Ts]], T],
    *args: Unpack[Ts],
) -> Future[T]:
    return asyncio.get_running_loop().run_in_executor(executor, task, *args)


async def for_each_completed(
    futures: list[Future[T]],
    callback: Callable[[T], object],
) -> None:
    """Hand each result to `callback` on the loop thread as soon as it is ready."""
    for future in asyncio.as_completed(futures):
        callback(await future)

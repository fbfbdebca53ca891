import asyncio
import logging
import os
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor

logger = logging.getLogger("jc_blockade")


def worker_count() -> int:
    """并发工作线程数：环境变量 JC_THREADS 优先，否则取 CPU 核数。"""
    env = os.environ.get("JC_THREADS", "").strip()
    if env:
        try:
            value = int(env)
            if value >= 1:
                return value
            logger.warning(f"JC_THREADS={env} 小于 1，改用 CPU 核数")
        except ValueError:
            logger.warning(f"JC_THREADS={env!r} 不是整数，改用 CPU 核数")
    return os.cpu_count() or 1


class TaskScheduler:
    """任务调度器类，把同步计算包装成命名的 asyncio 任务，在线程池中并发执行。"""

    def __init__(self, max_workers: int | None = None):
        """初始化任务调度器。

        Args:
            max_workers: 线程池大小，为 None 时按 worker_count() 决定
        """
        self._max_workers = max_workers or worker_count()
        self._tasks: dict[str, asyncio.Task] = {}
        self._executor: ThreadPoolExecutor | None = None

    @property
    def max_workers(self) -> int:
        return self._max_workers

    def create_task(
        self, name: str, func: Callable, *args, replace_existing: bool = True
    ) -> asyncio.Task | None:
        """在线程池中执行 func(*args)，并登记为命名任务。须在事件循环内调用。

        Args:
            name: 任务名称
            func: 同步可调用对象
            replace_existing: 同名任务存在时是否取消并替换

        Returns:
            登记的任务；同名任务存在且 replace_existing=False 时返回 None
        """
        if name in self._tasks:
            if replace_existing:
                old_task = self._tasks.pop(name)
                if not old_task.done():
                    old_task.cancel()
            else:
                return None

        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self._max_workers, thread_name_prefix="jc")
        loop = asyncio.get_running_loop()
        executor = self._executor

        async def call():
            return await loop.run_in_executor(executor, func, *args)

        task = asyncio.create_task(call(), name=name)
        self._tasks[name] = task
        logger.debug(f"创建任务: {name}")
        return task

    async def cancel_task(self, name: str) -> bool:
        """取消指定名称的任务。

        Returns:
            任务是否存在并已取消
        """
        if name not in self._tasks:
            return False
        task = self._tasks.pop(name)
        if not task.done():
            task.cancel()
            await asyncio.gather(task, return_exceptions=True)
            logger.debug(f"取消任务: {name}")
        return True

    async def cancel_all_tasks(self) -> None:
        """取消所有任务。"""
        for name in list(self._tasks.keys()):
            await self.cancel_task(name)

    def get_active_tasks(self) -> set[str]:
        return {name for name, task in self._tasks.items() if not task.done()}

    def is_task_running(self, name: str) -> bool:
        task = self._tasks.get(name)
        return task is not None and not task.done()

    async def _run_all(self, jobs: list[tuple[str, Callable]]) -> list:
        try:
            tasks = [self.create_task(name, func) for name, func in jobs]
            return list(await asyncio.gather(*tasks))
        except BaseException:
            await self.cancel_all_tasks()
            raise
        finally:
            await self.shutdown()

    def run_all(self, jobs: list[tuple[str, Callable]]) -> list:
        """并发执行一批 (名称, 零参可调用对象)，结果按提交顺序返回。

        任一任务失败时取消其余任务并抛出该异常。
        """
        if not jobs:
            return []
        names = [name for name, _ in jobs]
        if len(set(names)) != len(names):
            raise ValueError("任务名称必须唯一")
        logger.info(f"并发执行 {len(jobs)} 个任务（{self._max_workers} 个线程）")
        return asyncio.run(self._run_all(jobs))

    async def shutdown(self):
        """关闭任务调度器，取消所有任务并释放线程池。"""
        await self.cancel_all_tasks()
        if self._executor is not None:
            self._executor.shutdown(wait=True, cancel_futures=True)
            self._executor = None
        self._tasks.clear()
        logger.debug("任务调度器已关闭")

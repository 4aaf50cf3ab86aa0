void fib_like(int n, int A[const restrict static n])
{
  for (int i = 2; i < n; i++)
    A[i] = (A[i - 1] + A[i - 2]) % 100;
}

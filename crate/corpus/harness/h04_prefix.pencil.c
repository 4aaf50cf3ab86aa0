void prefix(int n, int A[const restrict static n])
{
  for (int i = 1; i < n; i++)
    A[i] += A[i - 1];
}

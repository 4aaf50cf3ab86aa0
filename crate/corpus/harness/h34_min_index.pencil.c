int argmin(int n, int A[const restrict static n])
{
  int best = 0;
  for (int i = 1; i < n; i++)
    if (A[i] < A[best])
      best = i;
  return best;
}

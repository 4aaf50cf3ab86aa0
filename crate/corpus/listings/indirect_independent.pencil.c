void scatter(int N, int A[const restrict static N], int t[const restrict static N])
{
#pragma pencil independent
  for (int i = 0; i < N; i++)
    A[t[i]]++;
}
